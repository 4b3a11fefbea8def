from .base import (
    AllowedSet,
    Anticipator,
    Label,
    NoPrediction,
    StepContext,
    Verdict,
    is_flagged,
    verdict_from_dict,
    verdict_to_dict,
)
from .baselines import (
    CornerCase,
    CornerCaseAnticipator,
    NgramAnticipator,
    NgramModel,
    TransitionAnticipator,
    TransitionMatrix,
    corner_case_verdict,
    fit_transition_matrix,
    ngram_verdict,
    one_step_memory_verdict,
)
from .llm import AcotTrace, LLMAnticipator, llm_anticipate, parse_reply
from .prompts import (
    Modality,
    PromptBundle,
    PromptContext,
    Scheme,
    Transcript,
    build_prompt,
    load_template,
    select_context,
)

__all__ = [
    "AcotTrace",
    "AllowedSet",
    "Anticipator",
    "CornerCase",
    "CornerCaseAnticipator",
    "LLMAnticipator",
    "Label",
    "Modality",
    "NgramAnticipator",
    "NgramModel",
    "NoPrediction",
    "PromptBundle",
    "PromptContext",
    "Scheme",
    "StepContext",
    "Transcript",
    "TransitionAnticipator",
    "TransitionMatrix",
    "Verdict",
    "build_prompt",
    "corner_case_verdict",
    "fit_transition_matrix",
    "is_flagged",
    "llm_anticipate",
    "load_template",
    "ngram_verdict",
    "one_step_memory_verdict",
    "parse_reply",
    "select_context",
    "verdict_from_dict",
    "verdict_to_dict",
]
