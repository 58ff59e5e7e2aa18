"""Template questions about land cover: parsing, answering, generation, prompt export.

Grammar (case-insensitive)::

    LAND_COVER := "what land cover classes are present?"
    YES_NO     := ("is there" | "are there") TERM (CONJ TERM){0,2} "?"
    TERM       := ["a" | "an" | "some"] <class name>
    CONJ       := "and" | "or"

``and`` binds tighter than ``or``; equal operators associate to the left.
Class names may themselves contain "and" or commas, so terms are matched
against the nomenclature with backtracking rather than split on keywords.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .metrics import LAND_COVER, YES_NO, vqa_accuracy
from .taxonomy import Nomenclature

LAND_COVER_TEXT = "what land cover classes are present?"
ARTICLES = ("a", "an", "some")
NO_CLASSES = "none"
PROMPT_SEP = " [SEP] "
DEFAULT_MIX = (0.807, 0.452, 0.271)
QUESTIONS_PER_SAMPLE = 25


class QuestionError(ValueError):
    pass


class UnknownClass(QuestionError):
    pass


class MalformedQuestion(QuestionError):
    pass


class MoreThanTwoConjunctions(QuestionError):
    pass


@dataclass(frozen=True)
class Present:
    class_id: int


@dataclass(frozen=True)
class And:
    left: object
    right: object


@dataclass(frozen=True)
class Or:
    left: object
    right: object


@dataclass(frozen=True)
class QuestionAst:
    qtype: str
    expr: object = None
    text: str = field(default="", compare=False)


@dataclass
class QaRecord:
    sample_id: object
    question: str
    qtype: str
    answer: str
    predicted: str | None = None
    context: str | None = None

    def to_json(self) -> dict:
        out = {"sample_id": self.sample_id, "question": self.question, "type": self.qtype, "answer": self.answer}
        if self.context is not None:
            out["context"] = self.context
        if self.predicted is not None:
            out["predicted"] = self.predicted
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "QaRecord":
        return cls(doc["sample_id"], doc["question"], doc["type"], doc["answer"],
                   doc.get("predicted"), doc.get("context"))


def leaves(expr) -> list[int]:
    if isinstance(expr, Present):
        return [expr.class_id]
    return leaves(expr.left) + leaves(expr.right)


def evaluate(expr, bits) -> bool:
    if isinstance(expr, Present):
        return bool(bits[expr.class_id])
    if isinstance(expr, And):
        return evaluate(expr.left, bits) and evaluate(expr.right, bits)
    return evaluate(expr.left, bits) or evaluate(expr.right, bits)


def build_expr(class_ids, ops):
    """Tree for ``t0 op0 t1 op1 t2 ...`` with and-over-or precedence, left-associative."""
    if len(ops) != len(class_ids) - 1:
        raise ValueError("need exactly one operator between consecutive terms")
    groups = []
    current = Present(class_ids[0])
    for op, cid in zip(ops, class_ids[1:]):
        if op == "and":
            current = And(current, Present(cid))
        elif op == "or":
            groups.append(current)
            current = Present(cid)
        else:
            raise ValueError(f"unknown conjunction {op!r}")
    groups.append(current)
    expr = groups[0]
    for g in groups[1:]:
        expr = Or(expr, g)
    return expr


def _normalize(text: str) -> str:
    text = re.sub(r"\s+", " ", text.strip().lower())
    return re.sub(r"\s+\?$", "?", text)


class _TermMatcher:
    def __init__(self, nom: Nomenclature):
        self.nom = nom
        self.names = sorted(((c.name, c.id) for c in nom.classes), key=lambda t: (-len(t[0]), t[1]))

    def _names_at(self, body: str, pos: int):
        for name, cid in self.names:
            end = pos + len(name)
            if body.startswith(name, pos) and (end == len(body) or body[end] == " "):
                yield cid, end

    def _term_starts(self, body: str, pos: int):
        yield pos
        for art in ARTICLES:
            if body.startswith(art + " ", pos):
                yield pos + len(art) + 1

    def parse(self, body: str, pos: int = 0):
        """All-terms parse of ``body[pos:]`` -> (class_ids, ops) or None."""
        for start in self._term_starts(body, pos):
            for cid, end in self._names_at(body, start):
                if end == len(body):
                    return [cid], []
                for op in ("and", "or"):
                    sep = f" {op} "
                    if body.startswith(sep, end):
                        rest = self.parse(body, end + len(sep))
                        if rest is not None:
                            return [cid] + rest[0], [op] + rest[1]
        return None

    def first_unknown(self, body: str) -> str | None:
        """Leftmost term that matches no class name, scanning greedily."""
        pos = 0
        while pos < len(body):
            nxt = None
            for start in self._term_starts(body, pos):
                for _, end in self._names_at(body, start):
                    sep = re.match(r" (?:and|or) ", body[end:])
                    if end == len(body) or sep:
                        nxt = end + (sep.end() if sep else 0)
                        break
                if nxt is not None:
                    break
            if nxt is None:
                m = re.compile(r" (?:and|or) ").search(body, pos)
                chunk = body[pos:m.start() if m else len(body)]
                words = chunk.split(" ", 1)
                return words[1] if len(words) == 2 and words[0] in ARTICLES else chunk
            pos = nxt
        return None


def parse_question(text: str, nom: Nomenclature) -> QuestionAst:
    norm = _normalize(text)
    if norm == LAND_COVER_TEXT:
        return QuestionAst(LAND_COVER, None, text)
    m = re.match(r"^(?:is|are) there (.+)\?$", norm)
    if not m:
        raise MalformedQuestion(text)
    body = m.group(1)
    matcher = _TermMatcher(nom)
    parsed = matcher.parse(body)
    if parsed is None:
        unknown = matcher.first_unknown(body)
        if unknown is not None:
            raise UnknownClass(unknown)
        raise MalformedQuestion(text)
    ids, ops = parsed
    if len(ops) > 2:
        raise MoreThanTwoConjunctions(text)
    return QuestionAst(YES_NO, build_expr(ids, ops), text)


def _infix(expr, nom: Nomenclature) -> str:
    if isinstance(expr, Present):
        return nom.classes[expr.class_id].name
    if isinstance(expr, And):
        if not isinstance(expr.right, Present) or isinstance(expr.left, Or):
            raise ValueError("tree needs parentheses; the grammar cannot express it")
        return f"{_infix(expr.left, nom)} and {_infix(expr.right, nom)}"
    if isinstance(expr.right, Or):
        raise ValueError("tree needs parentheses; the grammar cannot express it")
    return f"{_infix(expr.left, nom)} or {_infix(expr.right, nom)}"


def render_question(ast: QuestionAst, nom: Nomenclature) -> str:
    if ast.qtype == LAND_COVER:
        return LAND_COVER_TEXT
    lead = "is there" if isinstance(ast.expr, Present) else "are there"
    return f"{lead} {_infix(ast.expr, nom)}?"


def present_names(labels, nom: Nomenclature) -> list[str]:
    bits = np.asarray(labels)
    return [c.name for c in nom.classes if bits[c.id]]


def answer(ast: QuestionAst, labels, nom: Nomenclature) -> str:
    if ast.qtype == YES_NO:
        return "yes" if evaluate(ast.expr, labels) else "no"
    names = present_names(labels, nom)
    return ", ".join(names) if names else NO_CLASSES


def generate_questions(labels, nom: Nomenclature, count: int = QUESTIONS_PER_SAMPLE, mix=DEFAULT_MIX,
                       seed: int = 0, sample_id: int = 0) -> list[QaRecord]:
    """Random template questions for one sample, answered from ``labels``.

    ``mix`` is ``(p_yesno, p_conj1, p_conj2)``. The stream is keyed on
    ``(seed, sample_id)`` so samples can be generated independently.
    """
    p_yesno, p_conj1, p_conj2 = mix
    if count < 1:
        raise ValueError("count must be at least 1")
    if not all(0 <= p <= 1 for p in mix) or p_conj1 + p_conj2 > 1 + 1e-12:
        raise ValueError(f"invalid question mix {mix}")
    rng = np.random.default_rng([seed, int(sample_id), 0x51])
    out = []
    for _ in range(count):
        if rng.random() < p_yesno:
            r = rng.random()
            n_conj = 1 if r < p_conj1 else 2 if r < p_conj1 + p_conj2 else 0
            if n_conj + 1 > len(nom):
                raise ValueError(f"{n_conj + 1} distinct classes needed, nomenclature has {len(nom)}")
            ids = [int(i) for i in rng.choice(len(nom), size=n_conj + 1, replace=False)]
            ops = ["and" if rng.random() < 0.5 else "or" for _ in range(n_conj)]
            ast = QuestionAst(YES_NO, build_expr(ids, ops))
        else:
            ast = QuestionAst(LAND_COVER)
        text = render_question(ast, nom)
        out.append(QaRecord(sample_id, text, ast.qtype, answer(ast, labels, nom)))
    return out


def build_prompt(labels, nom: Nomenclature, question: str) -> str:
    names = present_names(labels, nom)
    return (", ".join(names) if names else NO_CLASSES) + PROMPT_SEP + question


class QuestionCache:
    """Memoised parser; generated question sets repeat a lot of texts."""

    def __init__(self, nom: Nomenclature):
        self.nom = nom
        self._asts: dict[str, QuestionAst] = {}

    def __call__(self, text: str) -> QuestionAst:
        ast = self._asts.get(text)
        if ast is None:
            ast = self._asts[text] = parse_question(text, self.nom)
        return ast


def evaluate_vqa(pred_labels, gt_labels, questions, nom: Nomenclature) -> dict:
    """Answer every question from predicted and true labels and score the predictions.

    ``questions[i]`` is the list of :class:`QaRecord` for sample ``i``.
    """
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape or len(questions) != gt.shape[0]:
        raise ValueError("labels and question lists are not aligned")
    parse = QuestionCache(nom)
    preds, gts, types = [], [], []
    for i, qs in enumerate(questions):
        for q in qs:
            ast = parse(q.question)
            preds.append(answer(ast, pred[i], nom))
            gts.append(answer(ast, gt[i], nom))
            types.append(ast.qtype)
    return vqa_accuracy(preds, gts, types)
