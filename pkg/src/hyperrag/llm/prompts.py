"""Built-in prompt catalog.

Placeholders are written ``{name}``. Rendering substitutes each placeholder
exactly once, so braces inside bound values (chunk text, answers) are inert.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from ..errors import MissingBindingError

PLACEHOLDER_RE = re.compile(r"\{([a-z_][a-z0-9_]*)\}")

DEFAULT_ENTITY_TYPES = ("organization", "person", "geo", "event", "concept", "method", "condition")


class TemplateId(str, Enum):
    EXT_ENTITY = "ext_entity"
    EXT_LOW = "ext_low"
    EXT_HIGH = "ext_high"
    EXT_KEY = "ext_key"
    GEN_QUESTION = "gen_question"
    ANSWER_WITH_CONTEXT = "answer_with_context"
    EVAL_SCORING = "eval_scoring"
    EVAL_SELECT = "eval_select"
    MERGE_DESCRIPTIONS = "merge_descriptions"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: TemplateId
    body: str
    required_bindings: frozenset[str] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "required_bindings", frozenset(PLACEHOLDER_RE.findall(self.body)))

    def render(self, bindings: Mapping[str, object]) -> str:
        missing = self.required_bindings - set(bindings)
        if missing:
            raise MissingBindingError(self.template_id.value, missing)
        return PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), self.body)


def _format_section(noun: str, fields: list[str]) -> str:
    lines = "\n".join(f"{name}: <value>" for name in fields)
    return (
        "---Output Format---\n"
        f"Write one block per {noun}. Put each field on its own line as `field_name: value`.\n"
        "Separate consecutive blocks with a line containing only ##.\n"
        "Multi-valued fields are comma-separated on a single line.\n"
        "When you are finished, write <|COMPLETE|> on its own line.\n"
        "Block layout:\n"
        f"{lines}\n"
    )


EXT_ENTITY = (
    "Identify all entities. For each identified entity, extract the following information:\n"
    "- entity_name: Name of the entity, use same language as input text. If English, capitalized the name.\n"
    "- entity_type: One of the following types: [{entity_types}]\n"
    "- entity_description: Comprehensive description of the entity's attributes and activities.\n"
    "- additional_properties: Other attributes possibly associated with the entity, like time, space, emotion, motivation, etc.\n"
    "\n"
    + _format_section("entity", ["entity_name", "entity_type", "entity_description", "additional_properties"])
    + "\n---Text---\n{chunk}\n"
)

EXT_LOW = (
    "From the entities identified in {entities}, identify all pairs of (source_entity, target_entity) "
    "that are *clearly related* to each other.\n"
    "For each pair of related entities, extract the following information:\n"
    "- entities_pair: The name of source entity and target entity, as identified in {entities}.\n"
    "- low_order_relationship_description: Explanation as to why you think the source entity and the "
    "target entity are related to each other.\n"
    "- low_order_relationship_keywords: Keywords that summarize the overarching nature of the relationship, "
    "focusing on concepts or themes rather than specific details.\n"
    "- low_order_relationship_strength: A numerical score indicating the strength of the relationship "
    "between the entities.)\n"
    "\n"
    + _format_section(
        "entity pair",
        [
            "entities_pair",
            "low_order_relationship_description",
            "low_order_relationship_keywords",
            "low_order_relationship_strength",
        ],
    )
    + "\n---Text---\n{chunk}\n"
)

EXT_HIGH = (
    "Extract high-level keywords that summarize the main idea, major concept, or themes of the important passage.\n"
    "(Note: The content of high-level keywords should capture the overarching ideas present in the document, "
    "avoiding vague or empty terms).\n"
    "\n"
    "For the entities identified in {entities}, based on the entity pair relationships and the high-level "
    "keywords, find connections or commonalities among multiple entities and construct high-order associated "
    "entity set as much as possible.\n"
    "(Note: Avoid forcibly merging everything into a single association. If high-level keywords are not "
    "strongly associated, construct separate association).\n"
    "Extract the following information from all related entities, entity pairs, and high-level keywords:\n"
    "- entities_set: The collection of names for elements in high-order associated entity set, as identified "
    "in {entities}.\n"
    "- high_order_relationship_description: Use the relationships among the entities in the set to create a "
    "detailed, smooth, and comprehensive description that covers all entities in the set, without leaving out "
    "any relevant information.\n"
    "- high_order_relationship_generalization: Summarize the content of the entity set as concisely as possible.\n"
    "- high_order_relationship_keywords: Keywords that summarize the overarching nature of the high-order "
    "association, focusing on concepts or themes rather than specific details.\n"
    "- high_order_relationship_strength: A numerical score indicating the strength of the association among "
    "the entities in the set.\n"
    "\n"
    + _format_section(
        "entity set",
        [
            "entities_set",
            "high_order_relationship_description",
            "high_order_relationship_generalization",
            "high_order_relationship_keywords",
            "high_order_relationship_strength",
        ],
    )
    + "\n---Text---\n{chunk}\n"
)

EXT_KEY = (
    "You are a helpful assistant tasked with identifying both high-level and low-level keywords in the user's query.\n"
    "---Goal---\n"
    "Given the query, list both high-level and low-level keywords. High-level keywords focus on overarching "
    "concepts or themes, while low-level keywords focus on specific entities, details, or concrete terms.\n"
    "\n"
    + _format_section("query (a single block)", ["high_level_keywords", "low_level_keywords"])
    + "\n---Query---\n{query}\n"
)

GEN_QUESTION = (
    "---Role---\n"
    "You write evaluation questions for a document collection.\n"
    "---Goal---\n"
    "Write {n} self-contained question(s) that can be answered from the text below. "
    "A reader must be able to understand each question without seeing the text.\n"
    "{nesting_instruction}\n"
    "\n"
    + _format_section("question", ["question"])
    + "\n---Text---\n{chunk}\n"
)

NESTING_INSTRUCTIONS = {
    1: "Each question asks about a single point.",
    2: (
        "Each question has two nested parts: the first part asks for a fact, and the second part, "
        'introduced with "and explain", builds on the answer to the first.'
    ),
    3: (
        "Each question has three nested parts: a first question, a follow-up introduced with "
        '"and specifically", and a final part introduced with "including" that depends on both.'
    ),
}

ANSWER_WITH_CONTEXT = (
    "---Role---\n"
    "You are a helpful assistant answering questions from a domain expert.\n"
    "{knowledge_section}"
    "---Question---\n"
    "{question}\n"
    "---Instruction---\n"
    "Answer the question. When a Knowledge section is present, rely only on the knowledge provided there "
    "plus general reasoning, and do not invent facts that the knowledge does not support.\n"
)

# package-written level rubrics for the four dimensions after Comprehensiveness
_SCORE_RUBRICS = {
    "Diversity": (
        "Measure whether the answer brings in related knowledge and varied perspectives beyond the direct answer.",
        [
            "The answer is narrow, repeating a single point with no related knowledge.",
            "The answer adds a little related knowledge, but the perspective stays very limited.",
            "The answer offers some related knowledge and a few perspectives, but the range is modest.",
            "The answer is rich, bringing in several related points and perspectives.",
            "The answer is exceptionally rich, connecting many related points and perspectives that deepen understanding.",
        ],
    ),
    "Empowerment": (
        "Measure whether the answer is credible, free of fabricated content, and lets the reader act on it with confidence.",
        [
            "The answer contains clear fabrications or contradicts the document, and cannot be trusted.",
            "The answer has several unsupported or doubtful claims, so the reader cannot rely on it.",
            "The answer is mostly supported, but some claims are doubtful or unverifiable.",
            "The answer is well supported with only minor doubtful details.",
            "The answer is fully supported and trustworthy, and the reader can make informed judgments from it.",
        ],
    ),
    "Logical": (
        "Measure whether the answer is coherent, with arguments that follow from one another without contradiction.",
        [
            "The answer is incoherent or self-contradictory.",
            "The answer has a recognizable line of argument, but with frequent gaps or contradictions.",
            "The answer is mostly coherent, though some steps are missing or loosely connected.",
            "The answer is coherent and well argued, with few weak transitions.",
            "The answer is fully coherent, every step follows from the previous one, and there are no contradictions.",
        ],
    ),
    "Readability": (
        "Measure whether the answer is well organized and formatted, so that it is easy to read and understand.",
        [
            "The answer is disorganized and very hard to follow.",
            "The answer has some structure, but the organization and wording often obscure the meaning.",
            "The answer is readable, but its structure or formatting could be clearer.",
            "The answer is well organized and easy to read, with minor formatting issues.",
            "The answer is excellently organized and formatted, and reads effortlessly.",
        ],
    ),
}


def _rubric_block(name: str) -> str:
    intro, levels = _SCORE_RUBRICS[name]
    rows = "\n".join(
        f"Level {i + 1} | {f'{20 * i}-{20 * (i + 1)}':<6} | {text}" for i, text in enumerate(levels)
    )
    return f"-{name}-\n{intro}\nLevel   | score range | description\n{rows}\n"


EVAL_SCORING = (
    "You are an expert tasked with evaluating answers to the questions by using the relevant documents based on "
    "five criteria: Comprehensiveness, Diversity, Empowerment, Logical, and Readability.\n"
    "\n"
    "---Goal---\n"
    " You will evaluate tht answers to the questions by using the relevant documents based on five "
    "criteria:Comprehensiveness, Diversity, Empowerment, Logical, and Readability.\n"
    "\n"
    "-Comprehensiveness-\n"
    "Measure whether the answer comprehensively covers all key aspects of the question and whether there are omissions.\n"
    "Level   | score range | description\n"
    "Level 1 | 0-20   | The answer is extremely one-sided, leaving out key parts or important aspects of the question.\n"
    "Level 2 | 20-40  | The answer has some content, but it misses many important aspects of the question and is not "
    "comprehensive enough.\n"
    "Level 3 | 40-60  | The answer is more comprehensive, covering the main aspects of the question, but there are "
    "still some omissions.\n"
    "Level 4 | 60-80  | The answer is comprehensive, covering most aspects of the question, with few omissions.\n"
    "Level 5 | 80-100 | The answer is extremely comprehensive, covering all aspects of the question with no omissions, "
    "enabling the reader to gain a complete understanding.\n"
    + "".join(_rubric_block(name) for name in ("Diversity", "Empowerment", "Logical", "Readability"))
    + "For each indicator, please give the problem a corresponding Level based on the description of the indicator, "
    "and then give a score according to the score range of the level.\n"
    "\n"
    "Here are the question: {question}\n"
    "Here are the relevant document: {reference}\n"
    "Here are the answer: {answer}\n"
    "\n"
    "Evaluate all the answers using the five criteria listed above, for each criterion, provide a summary "
    "description, give a Level based on the description of the indicator, and then give a score based on the "
    "score range of the level.\n"
    "\n"
    + _format_section("criterion (five blocks, one per criterion)", ["criterion", "summary", "level", "score"])
)

EVAL_SELECT = (
    "You will evaluate two answers to the same question based on eight criteria: Comprehensiveness, Empowerment, "
    "Accuracy, Relevance, Coherence, Clarity, Logical, and Flexibility.\n"
    "\n"
    "---Goal---\n"
    "You will evaluate two answers to the same question by using the relevant documents based on eight criteria: "
    "Comprehensiveness, Empowerment, Accuracy, Relevance, Coherence, Clarity, Logical, and Flexibility.\n"
    "\n"
    "-Comprehensiveness: How much detail does the answer provide to cover all aspects and details of the question?\n"
    "-Empowerment: How well does the answer help the reader understand and make informed judgments about the topic?\n"
    "-Accuracy: How well does the answer align with factual truth and avoid hallucination based on the retrieved context?\n"
    "-Relevance: How precisely does the answer address the core aspects of the question without including "
    "unnecessary information?\n"
    "-Coherence: How well does the system integrate and synthesize information from multiple sources into a "
    "logically flowing response?\n"
    "-Clarity: How well does the system provide complete information while avoiding unnecessary verbosity and redundancy?\n"
    "-Logical: How well does the system maintain consistent logical arguments without contradicting itself across "
    "the response?\n"
    "-Flexibility: How well does the system handle various question formats, tones, and levels of complexity?\n"
    "\n"
    "For each criterion, choose the better answer (either Answer 1 or Answer 2) and explain why. Then, select an "
    "overall winner based on these ten categories.\n"
    "\n"
    "Here are the question: {question}\n"
    "Here are the two answers: \n"
    "Answer 1: {answer1};\n"
    "Answer 2: {answer2}\n"
    "\n"
    "Evaluate both answers using the eight criteria listed above and provide detailed explanations for each criterion.\n"
    "\n"
    + _format_section(
        "criterion (eight blocks, then a final block with criterion: Overall Winner)",
        ["criterion", "winner", "explanation"],
    )
    + "winner must be exactly `Answer 1` or `Answer 2`.\n"
)

MERGE_DESCRIPTIONS = (
    "---Role---\n"
    "You consolidate knowledge-base entries.\n"
    "---Goal---\n"
    "Below are several descriptions of the same {item_kind} \"{name}\" collected from different passages. "
    "Merge them into one consistent and complete description in the third person. "
    "Resolve contradictions where possible and keep every distinct fact.\n"
    "---Descriptions---\n"
    "{descriptions}\n"
    "---Output---\n"
    "Write only the merged description.\n"
)

CATALOG: dict[TemplateId, PromptTemplate] = {
    t.template_id: t
    for t in (
        PromptTemplate(TemplateId.EXT_ENTITY, EXT_ENTITY),
        PromptTemplate(TemplateId.EXT_LOW, EXT_LOW),
        PromptTemplate(TemplateId.EXT_HIGH, EXT_HIGH),
        PromptTemplate(TemplateId.EXT_KEY, EXT_KEY),
        PromptTemplate(TemplateId.GEN_QUESTION, GEN_QUESTION),
        PromptTemplate(TemplateId.ANSWER_WITH_CONTEXT, ANSWER_WITH_CONTEXT),
        PromptTemplate(TemplateId.EVAL_SCORING, EVAL_SCORING),
        PromptTemplate(TemplateId.EVAL_SELECT, EVAL_SELECT),
        PromptTemplate(TemplateId.MERGE_DESCRIPTIONS, MERGE_DESCRIPTIONS),
    )
}


def get_template(template_id: TemplateId | str) -> PromptTemplate:
    return CATALOG[TemplateId(template_id)]


def render_prompt(template_id: TemplateId | str, bindings: Mapping[str, object]) -> str:
    """Render a catalog template, failing on any unbound placeholder."""
    return get_template(template_id).render(bindings)
