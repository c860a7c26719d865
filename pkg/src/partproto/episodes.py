"""Episode data model and pipeline hyperparameters.

An episode is one C-way K-shot task. Masks are stored at the original
image resolution and use episode-local labels: 0 is background, label
c + 1 marks the class at position c of `class_list`, 255 is ignored.
`class_list` carries the global class identifiers for reporting.
"""

from dataclasses import dataclass, fields

from .errors import InvalidConfig, InvalidEpisode
from .grids import IGNORE_LABEL, FeatureGrid, LabelGrid

SupportPair = tuple[FeatureGrid, LabelGrid]


@dataclass(frozen=True)
class Episode:
    class_list: tuple[int, ...]
    support_labeled: tuple[tuple[SupportPair, ...], ...]  # [class][shot]
    support_unlabeled: tuple[FeatureGrid, ...]
    queries: tuple[SupportPair, ...]
    image_size: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "class_list", tuple(int(c) for c in self.class_list))
        object.__setattr__(
            self, "support_labeled", tuple(tuple(s) for s in self.support_labeled)
        )
        object.__setattr__(self, "support_unlabeled", tuple(self.support_unlabeled))
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(
            self, "image_size", (int(self.image_size[0]), int(self.image_size[1]))
        )
        validate_episode(self)

    @property
    def n_way(self) -> int:
        return len(self.class_list)

    @property
    def k_shot(self) -> int:
        return len(self.support_labeled[0])

    @property
    def n_unlabeled(self) -> int:
        return len(self.support_unlabeled)

    @property
    def n_query(self) -> int:
        return len(self.queries)

    @property
    def channels(self) -> int:
        return self.support_labeled[0][0][0].channels

    def all_grids(self) -> list[FeatureGrid]:
        grids = [g for shots in self.support_labeled for g, _ in shots]
        grids.extend(self.support_unlabeled)
        grids.extend(g for g, _ in self.queries)
        return grids

    def all_masks(self) -> list[LabelGrid]:
        masks = [m for shots in self.support_labeled for _, m in shots]
        masks.extend(m for _, m in self.queries)
        return masks


def validate_episode(ep: Episode) -> None:
    """Raise InvalidEpisode if any episode invariant is violated."""
    c = len(ep.class_list)
    if c < 1:
        raise InvalidEpisode("class_list is empty")
    if len(set(ep.class_list)) != c:
        raise InvalidEpisode("class_list contains duplicates")
    if len(ep.support_labeled) != c:
        raise InvalidEpisode(
            f"support_labeled has {len(ep.support_labeled)} classes, expected {c}"
        )
    k = len(ep.support_labeled[0])
    if k < 1:
        raise InvalidEpisode("at least one labeled shot per class is required")
    if any(len(shots) != k for shots in ep.support_labeled):
        raise InvalidEpisode("all classes must have the same shot count")
    if len(ep.queries) < 1:
        raise InvalidEpisode("at least one query is required")

    grids = ep.all_grids()
    n_ch = grids[0].channels
    if any(g.channels != n_ch for g in grids):
        raise InvalidEpisode("all grids in an episode must share the channel count")

    h, w = ep.image_size
    if h < 1 or w < 1:
        raise InvalidEpisode(f"bad image size {ep.image_size}")
    for m in ep.all_masks():
        if (m.height, m.width) != (h, w):
            raise InvalidEpisode(
                f"mask size {m.height}x{m.width} does not match image size {h}x{w}"
            )
        lab = m.labels
        bad = lab[(lab != IGNORE_LABEL) & (lab > c)]
        if bad.size:
            raise InvalidEpisode(
                f"mask label {int(bad[0])} outside local range 0..{c}"
            )
    for ci, shots in enumerate(ep.support_labeled):
        for ki, (_, m) in enumerate(shots):
            if not (m.labels == ci + 1).any():
                raise InvalidEpisode(
                    f"support mask (class {ci}, shot {ki}) lacks its designated class"
                )


@dataclass(frozen=True)
class HyperParams:
    """Pipeline knobs; defaults follow the reference operating point."""

    n_parts: int = 5
    n_regions: int = 100
    sigma: float = 0.0
    lambda_p: float = 0.8
    lambda_r: float = 0.2
    score_temperature: float = 20.0
    nonparametric_gnn: bool = False
    kmeans_max_iter: int = 50
    kmeans_tol: float = 1e-6
    slic_compactness: float = 0.1
    slic_iters: int = 10

    def __post_init__(self):
        if self.n_parts < 1:
            raise InvalidConfig("n_parts must be >= 1")
        if self.n_regions < 1:
            raise InvalidConfig("n_regions must be >= 1")
        if self.lambda_p < 0 or self.lambda_r < 0:
            raise InvalidConfig("lambda_p and lambda_r must be >= 0")
        if self.score_temperature <= 0:
            raise InvalidConfig("score_temperature must be > 0")
        if self.kmeans_max_iter < 1 or self.slic_iters < 0:
            raise InvalidConfig("iteration counts out of range")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
