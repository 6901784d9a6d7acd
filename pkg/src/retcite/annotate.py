"""Feature extraction from captured full texts and guided annotation.

Full texts arrive in a lightweight capture format (one file per citing
entity, explicit section markers, one sentence per line) rather than as
PDFs, since the extraction itself is an operator task.  The module pulls
citation contexts out of the captured documents, pre-computes the
mechanical features (section kind, retraction-mention flag) and drives a
resumable terminal session for the judgment calls: sentiment and citation
intent, the latter scored through a priority-ranked decision model.
"""

from __future__ import annotations

import json
import logging
import re
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import AnnotationError, MalformedInputError
from .model import InTextCitation

logger = logging.getLogger(__name__)

_WORD_RE = re.compile(r"[a-z]+")


# ---------------------------------------------------------------------------
# Captured documents

@dataclass
class Section:
    level: int
    heading: str
    sentences: list[str] = field(default_factory=list)


@dataclass
class Table:
    section_ref: int  # index into DocumentText.sections, -1 before any section
    caption: str
    cells: list[str] = field(default_factory=list)


@dataclass
class DocumentText:
    entity_id: str
    abstract: list[str] = field(default_factory=list)
    sections: list[Section] = field(default_factory=list)
    tables: list[Table] = field(default_factory=list)
    pointers: dict[str, str] = field(default_factory=dict)  # retracted_id -> pointer

    def top_level_heading(self, section_index: int) -> str | None:
        """Heading of the first-level section enclosing the given section."""
        if not self.sections:
            return None
        for i in range(section_index, -1, -1):
            if self.sections[i].level == 1:
                return self.sections[i].heading
        return self.sections[section_index].heading

    def top_level_position(self, section_index: int) -> tuple[int, int]:
        """(index, count) of the enclosing first-level section."""
        tops = [i for i, s in enumerate(self.sections) if s.level == 1]
        if not tops:
            return 0, max(1, len(self.sections))
        enclosing = 0
        for rank, i in enumerate(tops):
            if i <= section_index:
                enclosing = rank
        return enclosing, len(tops)


def parse_capture(path) -> DocumentText:
    """Parse one captured full-text file.

    Directives start a line: ``#doc id``, ``#pointer retracted_id text``,
    ``#abstract``, ``#section level heading``, ``#table caption``.  Every
    other non-blank line is one sentence (or one table cell) of the block
    opened by the last directive.
    """
    doc = DocumentText(entity_id="")
    target: list[str] | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                parts = line.split(None, 1)
                directive = parts[0]
                rest = parts[1].strip() if len(parts) > 1 else ""
                if directive == "#doc":
                    doc.entity_id = rest
                elif directive == "#pointer":
                    try:
                        retracted_id, pointer = rest.split(None, 1)
                    except ValueError:
                        raise MalformedInputError(
                            f"{path}:{line_no}: #pointer needs an id and a string"
                        )
                    doc.pointers[retracted_id] = pointer
                elif directive == "#abstract":
                    target = doc.abstract
                elif directive == "#section":
                    try:
                        level_str, heading = rest.split(None, 1)
                        level = int(level_str)
                    except ValueError:
                        raise MalformedInputError(
                            f"{path}:{line_no}: #section needs a level and a heading"
                        )
                    doc.sections.append(Section(level, heading))
                    target = doc.sections[-1].sentences
                elif directive == "#table":
                    doc.tables.append(Table(len(doc.sections) - 1, rest))
                    target = doc.tables[-1].cells
                else:
                    raise MalformedInputError(
                        f"{path}:{line_no}: unknown directive {directive!r}"
                    )
                continue
            if target is None:
                raise MalformedInputError(
                    f"{path}:{line_no}: text before any #abstract/#section/#table"
                )
            target.append(line.strip())
    if not doc.entity_id:
        raise MalformedInputError(f"{path}: missing #doc directive")
    return doc


@dataclass(frozen=True)
class PointerOccurrence:
    entity_id: str
    retracted_id: str
    pointer: str
    kind: str  # "sentence" | "section-title" | "table-cell"
    section_index: int = -1
    sentence_index: int = -1
    table_index: int = -1
    cell_index: int = -1
    position: str = ""  # first / last / middle for sentence occurrences


def find_pointer_occurrences(
    doc: DocumentText, retracted_id: str, pointer: str
) -> list[PointerOccurrence]:
    """Every place the pointer string shows up in the document."""
    found = []
    for si, section in enumerate(doc.sections):
        if pointer in section.heading:
            found.append(PointerOccurrence(
                doc.entity_id, retracted_id, pointer, "section-title",
                section_index=si,
            ))
        last = len(section.sentences) - 1
        for ti, sentence in enumerate(section.sentences):
            if pointer in sentence:
                position = "first" if ti == 0 else "last" if ti == last else "middle"
                found.append(PointerOccurrence(
                    doc.entity_id, retracted_id, pointer, "sentence",
                    section_index=si, sentence_index=ti, position=position,
                ))
    for ti, table in enumerate(doc.tables):
        for ci, cell in enumerate(table.cells):
            if pointer in cell:
                found.append(PointerOccurrence(
                    doc.entity_id, retracted_id, pointer, "table-cell",
                    table_index=ti, cell_index=ci,
                ))
    return found


def extract_context(doc: DocumentText, occ: PointerOccurrence) -> str:
    """The citation context of one pointer occurrence.

    Sentence anchors take the previous and next sentence of the same
    section (clamped at the section edges, so a first sentence keeps only
    the following one and a last sentence only the preceding one); a
    pointer in a section title takes the whole title, one in a table cell
    takes the whole cell.
    """
    try:
        if occ.kind == "section-title":
            return doc.sections[occ.section_index].heading
        if occ.kind == "table-cell":
            return doc.tables[occ.table_index].cells[occ.cell_index]
        sentences = doc.sections[occ.section_index].sentences
        anchor = occ.sentence_index
        if not 0 <= anchor < len(sentences):
            raise IndexError(anchor)
        lo = max(0, anchor - 1)
        hi = min(len(sentences) - 1, anchor + 1)
        return " ".join(sentences[lo:hi + 1])
    except IndexError:
        raise AnnotationError(
            f"entity {occ.entity_id!r}: unresolvable occurrence {occ}"
        )


def load_section_keywords(path=None) -> dict[str, list[str]]:
    path = path or resources.files("retcite") / "data" / "section_keywords.json"
    with open(str(path), encoding="utf-8") as fh:
        return json.load(fh)


def classify_section(
    heading: str | None,
    index: int,
    count: int,
    keywords: dict[str, list[str]],
) -> tuple[str, str]:
    """(section_kind, section_label) for a first-level heading.

    The seven named kinds apply only when the heading matches exactly one
    of them; otherwise the positional residual kinds keep the original
    title as label.  Unsectioned documents get ("none", "None").
    """
    if heading is None:
        return "none", "None"
    folded = heading.casefold()
    matched = {
        kind for kind, triggers in keywords.items()
        if any(t in folded for t in triggers)
    }
    if len(matched) == 1:
        return matched.pop(), heading
    if index == 0:
        return "first-section", heading
    if index == count - 1:
        return "final-section", heading
    return "middle-section", heading


def detect_retraction_mention(context: str) -> bool:
    """Lexical rule: any word starting with the stem 'retract'."""
    return any(
        token.startswith("retract")
        for token in _WORD_RE.findall(context.casefold())
    )


# ---------------------------------------------------------------------------
# Decision model

class PriorityTieError(MalformedInputError):
    """Two selected citation functions share the same priority sum."""

    def __init__(self, tied):
        super().__init__(f"tied priorities among {sorted(tied)}")
        self.tied = tied


@dataclass
class DecisionModel:
    macro_of: dict[str, str]  # subcategory -> macro category
    column_score: dict[str, int]  # subcategory -> 1..8
    cells: dict[tuple[int, str], dict[str, int]]  # (row, subcat) -> fn -> tenths
    guiding_templates: dict[str, str]
    descriptions: dict[str, str]
    sentiment_definitions: dict[str, str]
    help_notes: list[str]

    def __post_init__(self):
        self._row_of: dict[tuple[str, str], tuple[int, int]] = {}
        for (row, subcat), functions in self.cells.items():
            tenths = list(functions.values())
            if len(set(tenths)) != len(tenths):
                raise MalformedInputError(
                    f"cell ({row}, {subcat!r}) has duplicate parenthetical values"
                )
            for fn, t in functions.items():
                key = (subcat, fn)
                if key in self._row_of:
                    raise MalformedInputError(
                        f"function {fn!r} appears twice in column {subcat!r}"
                    )
                self._row_of[key] = (row, t)

    def priority_tenths(self, function: str, subcategory: str) -> int:
        """Row + column + parenthetical, in exact tenths."""
        try:
            row, tenths = self._row_of[(subcategory, function)]
        except KeyError:
            raise MalformedInputError(
                f"function {function!r} is not in any cell of the "
                f"{subcategory!r} column"
            )
        return row * 10 + self.column_score[subcategory] * 10 + tenths

    def priority(self, function: str, subcategory: str) -> float:
        return self.priority_tenths(function, subcategory) / 10

    def choices(self) -> list[tuple[str, str, str]]:
        """All (macro, subcategory, function) triples in display order."""
        ordered = []
        for (row, subcat), functions in sorted(
            self.cells.items(),
            key=lambda item: (self.column_score[item[0][1]], item[0][0]),
        ):
            for fn in sorted(functions, key=functions.get):
                ordered.append((self.macro_of[subcat], subcat, fn))
        return ordered


def load_decision_model(path=None) -> DecisionModel:
    path = path or resources.files("retcite") / "data" / "decision_model.json"
    with open(str(path), encoding="utf-8") as fh:
        raw = json.load(fh)
    macro_of, column_score, templates, descriptions = {}, {}, {}, {}
    for macro, info in raw["macro_categories"].items():
        templates[macro] = info["guiding_template"]
        descriptions[macro] = info["description"]
        for subcat, score in info["subcategories"].items():
            macro_of[subcat] = macro
            column_score[subcat] = int(score)
    cells = {}
    for cell in raw["cells"]:
        functions = {
            fn: round(float(v) * 10) for fn, v in cell["functions"].items()
        }
        cells[(int(cell["row"]), cell["subcategory"])] = functions
    return DecisionModel(
        macro_of=macro_of,
        column_score=column_score,
        cells=cells,
        guiding_templates=templates,
        descriptions=descriptions,
        sentiment_definitions=raw.get("sentiment_definitions", {}),
        help_notes=raw.get("help_notes", []),
    )


def score_intent(
    selections: list[tuple[str, str, str]], model: DecisionModel
) -> tuple[str, dict[tuple[str, str, str], float]]:
    """Pick the citation function with the smallest priority sum.

    Each selection is a (macro_category, subcategory, function) triple.  A
    single selection is returned as-is without scoring; an exact tie among
    several raises PriorityTieError for the operator to resolve.
    """
    if not selections:
        raise MalformedInputError("no citation function selected")
    for macro, subcat, fn in selections:
        if model.macro_of.get(subcat) != macro:
            raise MalformedInputError(
                f"subcategory {subcat!r} does not belong to {macro!r}"
            )
    if len(selections) == 1:
        return selections[0][2], {}
    table = {
        sel: model.priority_tenths(sel[2], sel[1]) for sel in selections
    }
    best = min(table.values())
    winners = {sel for sel, t in table.items() if t == best}
    if len({sel[2] for sel in winners}) > 1:
        raise PriorityTieError({sel[2] for sel in winners})
    chosen = next(iter(winners))[2]
    return chosen, {sel: t / 10 for sel, t in table.items()}


# ---------------------------------------------------------------------------
# Pending extraction and the interactive session

@dataclass
class PendingAnnotation:
    key: str  # entity|retracted|ordinal
    citation: InTextCitation


def extract_pending(
    doc: DocumentText, keywords: dict[str, list[str]] | None = None
) -> list[PendingAnnotation]:
    """Skeleton in-text citation records for every pointer occurrence."""
    keywords = keywords or load_section_keywords()
    pending = []
    for retracted_id in sorted(doc.pointers):
        pointer = doc.pointers[retracted_id]
        occurrences = find_pointer_occurrences(doc, retracted_id, pointer)
        if not occurrences:
            logger.warning(
                "pointer %r for %s not found in %s",
                pointer, retracted_id, doc.entity_id,
            )
        for ordinal, occ in enumerate(occurrences):
            context = extract_context(doc, occ)
            if occ.kind == "table-cell":
                ref = doc.tables[occ.table_index].section_ref
                heading = doc.top_level_heading(ref) if ref >= 0 else None
                index, count = (
                    doc.top_level_position(ref) if ref >= 0 else (0, 1)
                )
            else:
                heading = doc.top_level_heading(occ.section_index)
                index, count = doc.top_level_position(occ.section_index)
            kind, label = classify_section(heading, index, count, keywords)
            citation = InTextCitation(
                entity_id=doc.entity_id,
                retracted_id=retracted_id,
                pointer=pointer,
                context=context,
                section_label=label,
                section_kind=kind,
                mentions_retraction=(
                    "yes" if detect_retraction_mention(context) else "no"
                ),
            )
            pending.append(PendingAnnotation(
                key=f"{doc.entity_id}|{retracted_id}|{ordinal}",
                citation=citation,
            ))
    return pending


def load_journal(path) -> dict[str, dict]:
    """Replay an annotation journal; undo records drop earlier entries."""
    completed: dict[str, dict] = {}
    path = Path(path)
    if not path.exists():
        return completed
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "undo" in record:
                completed.pop(record["undo"], None)
            else:
                completed[record["key"]] = record
    return completed


class AnnotationSession:
    """Terminal front-end for sentiment / intent / mention labeling.

    Every confirmed item is appended to a JSONL journal immediately, so an
    interrupted session resumes at the first unannotated item and never
    loses or corrupts confirmed rows.
    """

    def __init__(self, journal_path, model: DecisionModel | None = None,
                 input_fn=input, output=None):
        self.journal_path = Path(journal_path)
        self.model = model or load_decision_model()
        self.input_fn = input_fn
        self.output = output or sys.stdout
        self.completed: dict[str, dict] = load_journal(self.journal_path)

    def _append(self, record: dict):
        with open(self.journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()

    def _say(self, text=""):
        print(text, file=self.output)

    def _ask(self, prompt: str) -> str:
        return self.input_fn(prompt).strip()

    def _show_intro(self):
        self._say("Sentiment values:")
        for name, definition in self.model.sentiment_definitions.items():
            self._say(f"  {name}: {definition}")
        for note in self.model.help_notes:
            self._say(f"Note: {note}")
        self._say()

    def _show_item(self, position, total, item: PendingAnnotation):
        c = item.citation
        self._say(f"[{position}/{total}] {c.entity_id} -> {c.retracted_id}  "
                  f"(pointer {c.pointer!r}, section: {c.section_kind} "
                  f"{c.section_label!r})")
        self._say(f"Context: {c.context}")

    def _ask_mention(self, auto: str) -> str:
        while True:
            reply = self._ask(
                f"Retraction mentioned [auto: {auto}] (Enter=keep, y/n): "
            ).lower()
            if reply == "":
                return auto
            if reply in ("y", "yes"):
                return "yes"
            if reply in ("n", "no"):
                return "no"
            self._say("Please answer y, n or Enter.")

    def _ask_sentiment(self) -> str:
        while True:
            reply = self._ask(
                "Sentiment 1=positive 2=negative 3=neutral (u=undo, q=quit): "
            ).lower()
            if reply in ("1", "2", "3"):
                return {"1": "positive", "2": "negative", "3": "neutral"}[reply]
            if reply in ("u", "q"):
                return reply
            self._say("Please answer 1, 2, 3, u or q.")

    def _show_choices(self, choices):
        current_macro = None
        for number, (macro, subcat, fn) in enumerate(choices, start=1):
            if macro != current_macro:
                current_macro = macro
                self._say(f"  [{macro}] {self.model.descriptions[macro]}")
                self._say(f"    \"{self.model.guiding_templates[macro]}\"")
            self._say(f"    {number:2d}. {subcat} / {fn}")

    def _ask_intent(self, choices) -> tuple[str, list]:
        while True:
            reply = self._ask(
                "Select one or more functions (comma-separated numbers): "
            )
            try:
                numbers = [int(x) for x in reply.replace(" ", "").split(",") if x]
                selections = [choices[n - 1] for n in numbers]
                if not selections or any(n < 1 for n in numbers):
                    raise IndexError
            except (ValueError, IndexError):
                self._say("Please enter valid choice numbers.")
                continue
            try:
                chosen, table = score_intent(selections, self.model)
            except PriorityTieError as tie:
                self._say(f"Priority tie among {sorted(tie.tied)}; pick one.")
                continue
            if table:
                logged = ", ".join(
                    f"{sel[2]}@{sel[1]}={priority:.1f}"
                    for sel, priority in sorted(table.items(), key=lambda i: i[1])
                )
                self._say(f"Priorities: {logged} -> {chosen}")
                logger.info("intent candidates: %s; chosen %s", logged, chosen)
            return chosen, [list(sel) for sel in selections]

    def run(self, pending: list[PendingAnnotation]) -> list[InTextCitation]:
        """Annotate every pending item not already in the journal."""
        worklist = [p for p in pending if p.key not in self.completed]
        if worklist:
            self._show_intro()
        choices = self.model.choices()
        total = len(pending)
        index = 0
        while index < len(worklist):
            item = worklist[index]
            self._show_item(total - len(worklist) + index + 1, total, item)
            try:
                mention = self._ask_mention(item.citation.mentions_retraction)
                sentiment = self._ask_sentiment()
            except EOFError:
                self._say("Input ended; progress saved.")
                break
            if sentiment == "q":
                break
            if sentiment == "u":
                if index == 0:
                    self._say("Nothing to undo in this session.")
                    continue
                index -= 1
                undone = worklist[index]
                self.completed.pop(undone.key, None)
                self._append({"undo": undone.key})
                self._say(f"Undid {undone.key}.")
                continue
            self._show_choices(choices)
            try:
                intent, selections = self._ask_intent(choices)
            except EOFError:
                self._say("Input ended; progress saved.")
                break
            record = {
                "key": item.key,
                "sentiment": sentiment,
                "intent": intent,
                "mentions_retraction": mention,
                "selections": selections,
            }
            self._append(record)
            self.completed[item.key] = record
            index += 1
        return self.collect(pending)

    def collect(self, pending: list[PendingAnnotation]) -> list[InTextCitation]:
        """Completed citation records, in pending order."""
        done = []
        for item in pending:
            record = self.completed.get(item.key)
            if record is None:
                continue
            citation = InTextCitation(
                entity_id=item.citation.entity_id,
                retracted_id=item.citation.retracted_id,
                pointer=item.citation.pointer,
                context=item.citation.context,
                section_label=item.citation.section_label,
                section_kind=item.citation.section_kind,
                sentiment=record["sentiment"],
                intent=record["intent"],
                mentions_retraction=record["mentions_retraction"],
            )
            done.append(citation)
        return done
