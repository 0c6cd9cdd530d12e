"""Task prompts, author personas and verification verdict parsing."""

from __future__ import annotations

import logging
import re
import string
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from enum import Enum
from typing import TYPE_CHECKING

from .errors import MissingSamples, UnparseableVerdict

if TYPE_CHECKING:
    from .corpus import Context

log = logging.getLogger(__name__)

DEFAULT_CHAR_BUDGET = 24_000


class TaskKind(str, Enum):
    VERIFY = "verify"
    MIMIC = "mimic"
    OBFUSCATE = "obfuscate"


# --- persona -------------------------------------------------------------

_SEX = {"f": ("female", "She", "Her"), "female": ("female", "She", "Her"),
        "m": ("male", "He", "His"), "male": ("male", "He", "His")}

_LANG_ENV = {
    "ESL": "English as a Second Language",
    "EFL": "English as a Foreign Language",
    "NS": "Native Speaker",
}

_CEFR_SUFFIX = {"1": " (lower)", "2": " (upper)", "0": ""}


def _cefr(value: str) -> str:
    m = re.fullmatch(r"([A-C][12]|XX)_([012])", value.strip())
    if not m:
        return value.strip()
    level, sub = m.groups()
    if level == "XX":
        return "native"
    return level + _CEFR_SUFFIX[sub]


def _article(word: str) -> str:
    # acronyms such as ESL/EFL/NS are read letter by letter
    if word.isupper():
        return "an" if word[0] in "AEFHILMNORSX" else "a"
    return "an" if word[0].lower() in "aeiou" else "a"


def render_author_identification(metadata: Mapping[str, str]) -> str:
    """Render author metadata as a short persona paragraph.

    Attributes are rendered in a fixed order: sex, academic background,
    proficiency, then origin/language environment. Missing attributes are
    skipped, so an empty mapping yields ``""``.
    """
    sex = metadata.get("sex", "").strip()
    noun, subj, poss = _SEX.get(sex.lower(), (None, "They", "Their"))
    sentences = []
    if noun:
        sentences.append(f"The author is {noun}.")
    elif sex:
        sentences.append(f"The author's sex is {sex}.")
    if genre := metadata.get("academic_genre", "").strip():
        sentences.append(f"{poss} academic background is in the {genre}.")
    if cefr := metadata.get("cefr", "").strip():
        level = _cefr(cefr)
        if level == "native":
            sentences.append(f"{poss} English proficiency level is native.")
        else:
            sentences.append(f"{poss} English proficiency level is CEFR {level}.")
    country = metadata.get("country", "").strip()
    env = metadata.get("lang_env", "").strip()
    verb = "are" if subj == "They" else "is"
    env_phrase = ""
    if env:
        label = _LANG_ENV.get(env.upper())
        env_phrase = f"{_article(env)} {env} environment" + (f" ({label})" if label else "")
    if country and env_phrase:
        sentences.append(f"{subj} {verb} from {country}, {env_phrase}.")
    elif country:
        sentences.append(f"{subj} {verb} from {country}.")
    elif env_phrase:
        sentences.append(f"{subj} {verb} in {env_phrase}.")
    return " ".join(sentences)


# --- prompt templates ----------------------------------------------------

VERIFY_SYSTEM = "You are a judge designed to verify the attribution of a human-author written text."
MIMIC_SYSTEM = "You are an emulator designed to replicate the writing style of a human author."
OBFUSCATE_SYSTEM = "You are an emulator designed to hide the writing style of a human author."

VERIFY_INSTRUCTION = (
    "You are given sample texts including {n_author} writings from the author and "
    "{n_other} writings from others. Analyze the writing styles of the input text, "
    "disregarding the differences in topic and content. Reasoning based on linguistic "
    "features such as phrasal verbs, modal verbs, punctuation, rare words, affixes, "
    "quantities, humor, sarcasm, typographical errors, and misspellings. Your task is to "
    "verify if the input text was written by {author_name}. As output, exclusively return "
    "yes or no without any accompanying explanations or comments."
)

MIMIC_INSTRUCTION = (
    "You are given {n} sample writings from the author. The goal of this task is to mimic "
    "the author’s writing style while paying meticulous attention to lexical richness "
    "and diversity, sentence structure, punctuation style, special character style, "
    "expressions and idioms, overall tone, emotion, and mood, or any other relevant aspect "
    "of writing style established by the author. Your task is to generate a {words}-word "
    "continuation that seamlessly blends with the provided input text. Ensure that the "
    "continuation is indistinguishable from both the input text and the {n} sample writings "
    "by the author. As output, exclusively return the text completion without any "
    "accompanying explanations or comments."
)

OBFUSCATE_INSTRUCTION = (
    "You are given {n} sample writings from an author. The goal of this task is to conceal "
    "the author's writing style by carefully modifying lexical richness and diversity, "
    "sentence structure, punctuation patterns, special character usage, expressions and "
    "idioms, overall tone, emotion, mood, and any other distinguishing stylistic elements. "
    "Your task is to generate {words}-word continuation that has writing style significantly "
    "different from the provided input text. Strive to make the rewritten text "
    "distinguishable from both the input text and the {n} sample writings by the author. As "
    "output, exclusively return the text completion without any accompanying explanations "
    "or comments."
)

PERSONA_LINE = "Here is some information about the author: {persona}"
TASK_LINE = "The input text is: {text}"


@dataclass(frozen=True)
class PromptSpec:
    """A rendered prompt.

    The four text fields are what a chat provider sees. ``input_text``,
    ``sample_texts``, ``contrast_texts`` and ``author_id`` keep the structured
    pieces so that deterministic mock providers can act on them.
    """

    task_kind: TaskKind
    system_text: str
    instruction_text: str
    context_text: str
    task_text: str
    input_text: str = ""
    sample_texts: tuple[str, ...] = ()
    contrast_texts: tuple[str, ...] = ()
    author_id: str = ""

    def user_message(self) -> str:
        return "\n\n".join([self.instruction_text, self.context_text, self.task_text])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["task_kind"] = self.task_kind.value
        d["sample_texts"] = list(self.sample_texts)
        d["contrast_texts"] = list(self.contrast_texts)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PromptSpec":
        d = dict(d)
        d["task_kind"] = TaskKind(d["task_kind"])
        d["sample_texts"] = tuple(d.get("sample_texts", ()))
        d["contrast_texts"] = tuple(d.get("contrast_texts", ()))
        return cls(**d)


def fit_char_budget(texts: Sequence[str], budget: int) -> list[str]:
    """Truncate the longest texts first until the total length fits ``budget``."""
    total = sum(len(t) for t in texts)
    if total <= budget or not texts:
        return list(texts)
    # largest cap c with sum(min(len, c)) <= budget
    lengths = sorted(len(t) for t in texts)
    remaining, cap = budget, 0
    for i, length in enumerate(lengths):
        share = remaining // (len(lengths) - i)
        if length <= share:
            remaining -= length
            continue
        cap = share
        break
    return [t if len(t) <= cap else t[:cap] for t in texts]


def _terminate(text: str) -> str:
    text = text.rstrip()
    return text if text.endswith((".", "!", "?")) else text + "."


def _sample_block(header: str, labelled: Sequence[tuple[str, str]]) -> str:
    lines = [header]
    for i, (label, text) in enumerate(labelled, start=1):
        tag = f" ({label})" if label else ""
        lines.append(f"Sample {i}{tag}: {text}")
    return "\n".join(lines)


def render_prompt(
    task_kind: TaskKind | str,
    context: "Context",
    input_text: str,
    target_words: int | None = None,
    author_name: str | None = None,
    char_budget: int = DEFAULT_CHAR_BUDGET,
) -> PromptSpec:
    task_kind = TaskKind(task_kind)
    if not context.sample_docs:
        raise MissingSamples(context.author_id)
    name = author_name or context.author_id
    own = [d.text for d in context.sample_docs]
    others = [d.text for d in context.contrast_docs] if task_kind is TaskKind.VERIFY else []
    fitted = fit_char_budget(own + others, char_budget)
    own_fit, others_fit = fitted[: len(own)], fitted[len(own):]

    parts = []
    if context.metadata_text:
        parts.append(PERSONA_LINE.format(persona=_terminate(context.metadata_text)))

    if task_kind is TaskKind.VERIFY:
        system = VERIFY_SYSTEM
        instruction = VERIFY_INSTRUCTION.format(
            n_author=len(own), n_other=len(others), author_name=name
        )
        labelled = [("by the author", t) for t in own_fit]
        labelled += [("by others", t) for t in others_fit]
        parts.append(_sample_block(f"The {len(labelled)} sample writings:", labelled))
    else:
        if target_words is None or target_words < 1:
            raise ValueError("target_words must be >= 1 for mimic/obfuscate prompts")
        if task_kind is TaskKind.MIMIC:
            system, template = MIMIC_SYSTEM, MIMIC_INSTRUCTION
        else:
            system, template = OBFUSCATE_SYSTEM, OBFUSCATE_INSTRUCTION
        instruction = template.format(n=len(own), words=target_words)
        parts.append(
            _sample_block(
                f"The {len(own)} sample writings from an author:", [("", t) for t in own_fit]
            )
        )

    return PromptSpec(
        task_kind=task_kind,
        system_text=system,
        instruction_text=instruction,
        context_text="\n".join(parts),
        task_text=TASK_LINE.format(text=input_text),
        input_text=input_text,
        sample_texts=tuple(own),
        contrast_texts=tuple(others),
        author_id=context.author_id,
    )


# --- verdicts ------------------------------------------------------------

@dataclass(frozen=True)
class Verdict:
    accepted: bool
    raw_response: str
    parsed: bool = True


_STRIP = string.whitespace + string.punctuation + "“”‘’"


def parse_verdict(raw_response: str) -> Verdict:
    """Strict prefix parse of a yes/no answer; anything else is unparseable."""
    cleaned = raw_response.strip(_STRIP).lower()
    m = re.match(r"[a-z]+", cleaned)
    token = m.group(0) if m else ""
    if token == "yes":
        return Verdict(True, raw_response)
    if token == "no":
        return Verdict(False, raw_response)
    raise UnparseableVerdict(raw_response)


def verdict_or_reject(raw_response: str) -> Verdict:
    """``parse_verdict`` that maps unparseable answers to a logged rejection."""
    try:
        return parse_verdict(raw_response)
    except UnparseableVerdict:
        log.warning("unparseable verdict treated as rejection: %r", raw_response[:120])
        return Verdict(False, raw_response, parsed=False)
