"""Merge grounding proposals from several expert models into one candidate label.

Experts are plain callables ``(ImageBuffer, phrase) -> Heatmap``.  Hosted
models and LLM-based instruction simplification are out of tree; the prompt
templates below let a real client be dropped in behind
:class:`InstructionSimplifier`.
"""
from __future__ import annotations

import itertools
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AnnotationFailed, DimensionMismatch, EmptyProposalSet, ExpertError
from .heatmap import Heatmap, ImageBuffer, Instruction, mask_iou, threshold
from .records import AnnotationRecord

logger = logging.getLogger(__name__)

Expert = Callable[[ImageBuffer, str], Heatmap]

INSTRUCTION_GENERATION_PROMPT = """[Image Description]
%s

[System]
You are an AI visual assistant, and you are seeing a single image. What you see are part of the image and are provided with a simple phrase.  Please generate any instructions that can be executed based on the content of the picture described, including simple queries about the content of the picture, such as the object types, counting the objects, object actions, relative positions between objects, etc. Also consider more complex questions that require reasoning. For example, you can ask what time it is now for a clock and what can I use to clean the room for a broom. Ensure that the questions you ask can be clearly answered only based on what you see. Please generate as many five questions as possible and return them in a single line separated by ';' and avoid any other output.
"""

INSTRUCTION_SIMPLIFY_PROMPT = """[Image Caption] %s

[Instruction] %s

[System]
You are an helpful AI assistant. I need to reply to the previous instruction based on an image, and I have a simple caption for the image. Please note that there may be objects in the image that I did not detect. Since you cannot view the image, please list any potential objects that might influence my responses, separated by semicolons, in a single line without any additional output. If you believe that the number of objects could be too extensive and might hinder my judgment, print 'None'.
"""


@dataclass(frozen=True)
class ExpertProposal:
    expert_id: str
    heatmap: Heatmap
    confidence: Optional[float] = None

    def __post_init__(self):
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class FusionMethod:
    """``kind`` is one of ``mean``, ``weighted_mean``, ``vote``, ``max``."""

    kind: str = "mean"
    tau: float = 0.0  # vote only

    KINDS = ("mean", "weighted_mean", "vote", "max")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown fusion method {self.kind!r}")
        if not 0.0 <= self.tau < 1.0:
            raise ValueError(f"vote tau must be in [0, 1), got {self.tau}")

    @classmethod
    def parse(cls, text: str) -> "FusionMethod":
        """Parse ``mean``, ``max``, ``weighted_mean`` or ``vote[:tau]``."""
        kind, _, arg = text.partition(":")
        return cls(kind, float(arg)) if arg else cls(kind)


MEAN = FusionMethod("mean")


def _stack(proposals: Sequence[Union[ExpertProposal, Heatmap]]) -> Tuple[np.ndarray, np.ndarray]:
    if len(proposals) == 0:
        raise EmptyProposalSet("at least one proposal is required")
    maps, conf = [], []
    for p in proposals:
        if isinstance(p, Heatmap):
            maps.append(p.values)
            conf.append(1.0)
        else:
            maps.append(p.heatmap.values)
            conf.append(1.0 if p.confidence is None else p.confidence)
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise DimensionMismatch("all proposals must share dimensions")
    return np.stack(maps), np.asarray(conf)


def fuse(proposals: Sequence[Union[ExpertProposal, Heatmap]], method: FusionMethod = MEAN) -> Heatmap:
    stack, conf = _stack(proposals)
    # terms are summed in sorted order so the result is exactly independent
    # of proposal order (float addition is not associative)
    if method.kind == "mean":
        out = np.sort(stack, axis=0).sum(axis=0) / len(stack)
    elif method.kind == "weighted_mean":
        total = np.sort(conf).sum()
        if total == 0:
            out = np.zeros(stack.shape[1:])
        else:
            out = np.sort(conf[:, None, None] * stack, axis=0).sum(axis=0) / total
    elif method.kind == "vote":
        votes = np.count_nonzero(stack > method.tau, axis=0)
        out = (2 * votes > len(stack)).astype(np.float64)
    else:
        out = stack.max(axis=0)
    # mean of values in [0,1] can exceed 1 by an ulp
    return Heatmap(np.clip(out, 0.0, 1.0))


def agreement(proposals: Sequence[Union[ExpertProposal, Heatmap]]) -> float:
    """Mean pairwise IoU of the activated (``> 0``) regions."""
    stack, _ = _stack(proposals)
    if len(stack) < 2:
        raise ValueError("agreement needs at least two proposals")
    masks = [threshold(Heatmap(m), 0.0) for m in stack]
    ious = [mask_iou(a, b) for a, b in itertools.combinations(masks, 2)]
    # sorted so the sum, and hence the result, ignores proposal order
    return float(np.sort(ious).sum() / len(ious))


_STOP_WORDS = frozenset(
    """a an the this that these those please pick up place put grab take get find
    show me locate point to at on of in into onto with for from and or is are be
    can could would you i my your it its what where which who how do does there
    here move give hand select choose look""".split()
)


class InstructionSimplifier:
    """Map an instruction (plus optional caption) to target phrases.

    The default implementation is a deterministic rule: split on clause
    separators, drop stop words, keep what is left of each clause.  Subclass
    and override :meth:`simplify` to plug in an LLM client that fills
    :data:`INSTRUCTION_SIMPLIFY_PROMPT`.
    """

    prompt_template = INSTRUCTION_SIMPLIFY_PROMPT

    def simplify(self, instruction: str, caption: Optional[str] = None) -> List[str]:
        phrases = []
        for clause in re.split(r"[,;.!?]|\band\b|\bthen\b", instruction.lower()):
            words = [w for w in re.findall(r"[a-z0-9']+", clause) if w not in _STOP_WORDS]
            if words:
                phrase = " ".join(words)
                if phrase not in phrases:
                    phrases.append(phrase)
        if not phrases:
            phrases = [instruction.strip()]
        return phrases

    def __call__(self, instruction: str, caption: Optional[str] = None) -> List[str]:
        return self.simplify(instruction, caption)


def _run_expert(expert_id: str, expert: Expert, image: ImageBuffer, phrases: Sequence[str]) -> Heatmap:
    try:
        maps = [expert(image, phrase) for phrase in phrases]
        for m in maps:
            if not isinstance(m, Heatmap):
                raise TypeError(f"expected Heatmap, got {type(m).__name__}")
        # a region relevant to any target phrase is relevant to the instruction
        return Heatmap(np.max(np.stack([m.values for m in maps]), axis=0))
    except Exception as exc:
        raise ExpertError(expert_id, exc) from exc


def build_candidate_label(
    image: ImageBuffer,
    instruction: Union[str, Instruction],
    experts: Union[Mapping[str, Expert], Sequence[Tuple[str, Expert]]],
    simplifier: Optional[Callable[..., List[str]]] = None,
    method: FusionMethod = MEAN,
    *,
    record_id: str = "candidate",
    caption: Optional[str] = None,
    strict: bool = False,
    n_workers: Optional[int] = None,
) -> AnnotationRecord:
    """Run every expert on every simplified phrase and fuse the results.

    With ``strict=True`` the first failing expert raises :class:`ExpertError`;
    otherwise failing experts are skipped (and listed in ``meta["failed"]``)
    and :class:`AnnotationFailed` is raised only when none succeed.
    Results are combined in sorted expert-id order, so worker count and
    completion order never change the output.
    """
    text = instruction.text if isinstance(instruction, Instruction) else Instruction(instruction).text
    items: Dict[str, Expert] = dict(experts.items() if isinstance(experts, Mapping) else experts)
    if not items:
        raise ValueError("at least one expert is required")
    phrases = (simplifier or InstructionSimplifier())(text, caption)
    if n_workers is None:
        n_workers = int(os.environ.get("IVM_THREADS", "1"))
    ids = sorted(items)

    def run(eid):
        try:
            return _run_expert(eid, items[eid], image, phrases)
        except ExpertError as err:
            return err

    if n_workers > 1 and len(ids) > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, ids))
    else:
        results = [run(eid) for eid in ids]

    proposals, failed = [], []
    for eid, res in zip(ids, results):
        if isinstance(res, ExpertError):
            if strict:
                raise res
            logger.warning("%s", res)
            failed.append(res)
        else:
            proposals.append(ExpertProposal(eid, res))
    if not proposals:
        raise AnnotationFailed(f"all {len(ids)} experts failed: {[e.expert_id for e in failed]}")

    fused = fuse(proposals, method)
    meta = {"experts": [p.expert_id for p in proposals], "phrases": phrases, "fusion": method.kind}
    if failed:
        meta["failed"] = [e.expert_id for e in failed]
    return AnnotationRecord(
        id=record_id,
        instruction=text,
        source="machine:ensemble",
        split="o",
        meta=meta,
        image=image,
        heatmap=fused,
    )
