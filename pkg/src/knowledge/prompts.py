from __future__ import annotations

DEFAULT_PROMPT_TEMPLATE = (
    "Explain the visual appearance, in histology images, of each pathological term "
    "in the following description, one sentence per term: {expression}"
)


def build_knowledge_prompt(expression: str, template: str = DEFAULT_PROMPT_TEMPLATE) -> str:
    """Instantiate ``template`` with the expression.

    The template must contain a single ``{expression}`` placeholder.
    """
    if "{expression}" not in template:
        raise ValueError("Prompt template must contain an '{expression}' placeholder")
    return template.replace("{expression}", expression.strip())


__all__ = ["DEFAULT_PROMPT_TEMPLATE", "build_knowledge_prompt"]
