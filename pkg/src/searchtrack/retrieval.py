"""Greedy composition of library fragments to approximate query fragments."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .documents import Fragment, FragmentId, build_document, fragmentize, multiscale_configs
from .errors import EmptyQuery
from .flow import FlowField
from .library import LibraryIndex


@dataclass(frozen=True)
class RetrievalParams:
    rho: float = 0.1
    max_iterations: int = 16

    def __post_init__(self):
        if not 0 <= self.rho < 1:
            raise ValueError("rho must be in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class CompositionResult:
    query_fragment_id: FragmentId
    chosen: list = field(default_factory=list)  # [(library FragmentId, h after adding)]
    final_score: float = 0.0
    covered: int = 0

    @property
    def config_id(self) -> int:
        return self.query_fragment_id.config_id

    @property
    def start_t(self) -> int:
        return self.query_fragment_id.start_t


def composition_score(f_q, f_r) -> float:
    """``|f_q & f_r| / max(|f_q|, |f_r|)``.

    This is the histogram intersection of the two sets viewed as uniform
    distributions over their members.
    """
    if not f_q:
        raise EmptyQuery("query fragment has no activations")
    f_q, f_r = set(f_q), set(f_r)
    return len(f_q & f_r) / max(len(f_q), len(f_r))


def candidates(uncovered, index: LibraryIndex) -> set:
    """Library fragments sharing at least one activation with ``uncovered``."""
    out = set()
    for a in uncovered:
        out.update(index.fragment_inverse.get(a, ()))
    return out


def greedy_compose(f_q, index: LibraryIndex, params: RetrievalParams | None = None,
                   query_id: FragmentId | None = None, trace: list | None = None) -> CompositionResult:
    """Greedily add the library fragment that maximizes the composition score.

    Stops once at most ``rho`` of the query activations remain uncovered, when
    no library fragment touches the uncovered part, or after
    ``max_iterations`` additions. Equal scores go to the smallest fragment id.
    If ``trace`` is given, each iteration's ``{candidate: h}`` map is appended.
    """
    params = params or RetrievalParams()
    if isinstance(f_q, Fragment):
        query_id = query_id or f_q.fragment_id
        f_q = f_q.activations
    f_q = frozenset(f_q)
    if not f_q:
        raise EmptyQuery("query fragment has no activations")
    result = CompositionResult(query_id)
    n_q = len(f_q)
    f_r: set = set()
    uncovered = set(f_q)
    while len(uncovered) > params.rho * n_q and len(result.chosen) < params.max_iterations:
        xs = candidates(uncovered, index)
        if not xs:
            break
        covered_now = n_q - len(uncovered)
        scores = {}
        for x in xs:
            acts = index.fragment_forward[x]
            union = len(f_r) + len(acts - f_r)
            scores[x] = (covered_now + len(uncovered & acts)) / max(n_q, union)
        if trace is not None:
            trace.append(dict(scores))
        best = min(scores, key=lambda x: (-scores[x], x))
        f_r |= index.fragment_forward[best]
        uncovered = f_q - f_r
        result.chosen.append((best, scores[best]))
    result.covered = n_q - len(uncovered)
    result.final_score = result.chosen[-1][1] if result.chosen else 0.0
    return result


def query_fragments(step_flows: Sequence[FlowField], video_id: str = "query", cube_base=20,
                    fragment_len: int = 8, mag_threshold: float = 1.0,
                    vote_threshold: float = 0.10, step: int = 4, configs=None) -> list[Fragment]:
    """Fragments of all 21 multi-scale documents of a query video."""
    if not step_flows:
        return []
    height, width = step_flows[0].u.shape
    configs = configs if configs is not None else multiscale_configs(width, height)
    frags = []
    for cfg in configs:
        doc = build_document(step_flows, cfg, cube_base, mag_threshold, vote_threshold, step)
        frags.extend(fragmentize(doc, fragment_len, video_id))
    return frags


def query_video(step_flows: Sequence[FlowField], index: LibraryIndex,
                params: RetrievalParams | None = None, video_id: str = "query",
                cube_base=None, configs=None) -> list[CompositionResult]:
    """Compose every nonempty fragment of every configuration of a query.

    ``step_flows`` are the query's time-step averaged flows. Document
    parameters come from the index so query words line up with library words.
    """
    p = index.params
    frags = query_fragments(step_flows, video_id, cube_base if cube_base is not None else p.cube_base,
                            p.fragment_len, p.mag_threshold, p.vote_threshold, p.step, configs)
    return [greedy_compose(f, index, params) for f in frags if f.activations]
