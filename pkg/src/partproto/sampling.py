"""Episodic sampling from an item bank.

A directory of episode archives doubles as an item bank: every labeled
support pair and every query (with its ground truth) becomes one item
carrying global class labels. `sample_episode` composes fresh episodes
from such a bank with disjoint support/query/unlabeled item sets.
"""

from dataclasses import dataclass

import numpy as np

from .archive import find_episode_archives, read_episode_archive
from .episodes import Episode
from .errors import InsufficientData, InvalidEpisode
from .grids import IGNORE_LABEL, FeatureGrid, LabelGrid


@dataclass(frozen=True)
class Item:
    grid: FeatureGrid
    mask: LabelGrid  # global class labels
    classes: tuple[int, ...]  # global ids present (foreground only)


@dataclass(frozen=True)
class ItemBank:
    items: tuple[Item, ...]
    image_size: tuple[int, int]

    def class_ids(self) -> list[int]:
        return sorted({c for it in self.items for c in it.classes})

    def indices_with_class(self, cid: int) -> list[int]:
        return [i for i, it in enumerate(self.items) if cid in it.classes]


def _globalize(mask: LabelGrid, class_list: tuple[int, ...]) -> LabelGrid:
    table = np.zeros(256, dtype=np.uint8)
    table[IGNORE_LABEL] = IGNORE_LABEL
    for c, cid in enumerate(class_list):
        if not (1 <= cid <= 254):
            raise InvalidEpisode(
                f"global class id {cid} outside the 1..254 range an item bank supports"
            )
        table[c + 1] = cid
    return LabelGrid(table[mask.labels])


def load_item_bank(directory) -> ItemBank:
    """Harvest items from every episode archive in a directory."""
    items: list[Item] = []
    size = None
    for path in find_episode_archives(directory):
        ep = read_episode_archive(path)
        if size is None:
            size = ep.image_size
        elif size != ep.image_size:
            raise InvalidEpisode(f"{path}: image size differs within the bank")
        pairs = [p for shots in ep.support_labeled for p in shots]
        pairs.extend(ep.queries)
        for grid, mask in pairs:
            gmask = _globalize(mask, ep.class_list)
            present = tuple(
                int(v) for v in np.unique(gmask.labels) if v not in (0, IGNORE_LABEL)
            )
            if present:
                items.append(Item(grid, gmask, present))
    if not items:
        raise InsufficientData(f"{directory}: no labeled items found")
    return ItemBank(tuple(items), size)


def _localize(mask: LabelGrid, chosen: tuple[int, ...]) -> LabelGrid:
    table = np.zeros(256, dtype=np.uint8)
    table[IGNORE_LABEL] = IGNORE_LABEL
    for c, cid in enumerate(chosen):
        table[cid] = c + 1
    return LabelGrid(table[mask.labels])


def sample_episode(
    bank: ItemBank,
    fold: list[int],
    c_way: int,
    k_shot: int,
    n_unlabeled: int,
    n_query: int,
    seed: int,
) -> Episode:
    """Compose one C-way K-shot episode from the bank, deterministically.

    Support, query, and unlabeled items are pairwise disjoint. Classes
    come from `fold`; labels of non-chosen classes collapse to
    background in the emitted masks.
    """
    rng = np.random.default_rng(seed)
    fold = sorted(set(fold))
    eligible = [
        c
        for c in fold
        if len(bank.indices_with_class(c)) >= k_shot + n_query
    ]
    if len(eligible) < c_way:
        raise InsufficientData(
            f"fold has {len(eligible)} classes with enough items, need {c_way}"
        )
    chosen = tuple(
        int(c) for c in rng.choice(np.asarray(eligible), size=c_way, replace=False)
    )

    used: set[int] = set()
    support = []
    for cid in chosen:
        candidates = [i for i in bank.indices_with_class(cid) if i not in used]
        if len(candidates) < k_shot:
            raise InsufficientData(f"class {cid}: not enough disjoint support items")
        picks = rng.choice(np.asarray(candidates), size=k_shot, replace=False)
        shots = []
        for i in picks:
            it = bank.items[int(i)]
            shots.append((it.grid, _localize(it.mask, chosen)))
            used.add(int(i))
        support.append(tuple(shots))

    query_candidates = sorted(
        {
            i
            for cid in chosen
            for i in bank.indices_with_class(cid)
            if i not in used
        }
    )
    if len(query_candidates) < n_query:
        raise InsufficientData("not enough disjoint query items")
    queries = []
    for i in rng.choice(np.asarray(query_candidates), size=n_query, replace=False):
        it = bank.items[int(i)]
        queries.append((it.grid, _localize(it.mask, chosen)))
        used.add(int(i))

    pool_candidates = sorted(
        {
            i
            for cid in fold
            for i in bank.indices_with_class(cid)
            if i not in used
        }
    )
    if len(pool_candidates) < n_unlabeled:
        raise InsufficientData("not enough disjoint unlabeled items")
    unlabeled = []
    if n_unlabeled:
        for i in rng.choice(np.asarray(pool_candidates), size=n_unlabeled, replace=False):
            unlabeled.append(bank.items[int(i)].grid)
            used.add(int(i))

    return Episode(
        class_list=chosen,
        support_labeled=tuple(support),
        support_unlabeled=tuple(unlabeled),
        queries=tuple(queries),
        image_size=bank.image_size,
    )
