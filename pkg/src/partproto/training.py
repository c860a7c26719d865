"""Training of the message-passing weight matrix.

The full episode loss is not differentiable through the discrete
pipeline stages, so the gradient treats them as fixed: K-means
assignments, regions, and region selection never depend on the weight
matrix, while the max-pooled part choice, the ReLU activation pattern,
and the attention clamp pattern are recorded on the forward pass and
reused. Everything here runs in float64 end to end; `replay_loss`
evaluates the identical smooth function of W that the analytic
gradient differentiates, which is what finite-difference checks probe.
"""

from dataclasses import dataclass

import numpy as np

from .episodes import Episode, HyperParams
from .errors import NonparametricMode
from .grids import IGNORE_LABEL, resize_mask_nearest
from .losses import EpisodeLoss
from .pipeline import build_contextual_prototypes, build_region_pool
from .prototypes import ATTENTION_EPS
from .refine import MessageWeights, neighbor_mix, select_relevant_regions


@dataclass(frozen=True)
class ChannelState:
    protos: np.ndarray   # (N_p, C) float64, contextual stage
    regions: np.ndarray  # (n, C) float64, selected pool vectors
    mix: np.ndarray      # (n, C) float64 neighbor mixes


@dataclass(frozen=True)
class GridState:
    feats: np.ndarray    # (cells, C) float64
    labels: np.ndarray   # (cells,) int64, local labels
    valid: np.ndarray    # (cells,) bool
    is_query: bool


@dataclass(frozen=True)
class EpisodeCapture:
    """Weight-independent forward state of one episode."""

    channels: tuple[ChannelState, ...]
    grids: tuple[GridState, ...]
    n_query: int
    n_support: int
    lambda_r: float
    temperature: float

    @property
    def refinable(self) -> bool:
        return self.lambda_r > 0 and any(
            ch.regions.shape[0] > 0 for ch in self.channels
        )


@dataclass(frozen=True)
class DiscreteState:
    """Weight-dependent discrete decisions recorded at a reference W."""

    relu_masks: tuple            # per channel: (n, C) bool or None
    phi_clamp: tuple             # per channel: (N_p, n) bool or None
    phi_dead: tuple              # per channel: (N_p,) bool or None
    part_argmax: tuple           # per grid: (channels, cells) int64


def capture_episode(
    episode: Episode, hp: HyperParams, seed: int = 0
) -> EpisodeCapture:
    """Run the weight-independent pipeline stages and freeze the result."""
    contextual = build_contextual_prototypes(episode, hp, seed)
    pool = build_region_pool(episode, hp)
    channels = []
    for protos in contextual:
        selected = select_relevant_regions(pool, protos, hp.sigma)
        regions = selected.vectors.astype(np.float64)
        if regions.shape[0] > 0:
            mix = neighbor_mix(selected.vectors)
        else:
            mix = np.zeros_like(regions)
        channels.append(
            ChannelState(protos.vectors.astype(np.float64), regions, mix)
        )

    grids = []
    for grid, gt in episode.queries:
        gt_feat = resize_mask_nearest(gt, grid.height, grid.width)
        labels = gt_feat.labels.ravel().astype(np.int64)
        grids.append(
            GridState(
                grid.flat().astype(np.float64),
                labels,
                labels != IGNORE_LABEL,
                True,
            )
        )
    for shots in episode.support_labeled:
        for grid, mask in shots:
            mask_feat = resize_mask_nearest(mask, grid.height, grid.width)
            labels = mask_feat.labels.ravel().astype(np.int64)
            grids.append(
                GridState(
                    grid.flat().astype(np.float64),
                    labels,
                    labels != IGNORE_LABEL,
                    False,
                )
            )
    return EpisodeCapture(
        channels=tuple(channels),
        grids=tuple(grids),
        n_query=episode.n_query,
        n_support=sum(len(s) for s in episode.support_labeled),
        lambda_r=hp.lambda_r,
        temperature=hp.score_temperature,
    )


def _refine_channel(ch: ChannelState, w: np.ndarray, lam: float, frozen=None):
    """Smooth refinement of one channel; records or replays the ReLU and
    clamp patterns. Returns (refined, cache) where cache is None for
    channels with no region path."""
    n = ch.regions.shape[0]
    if n == 0 or lam == 0.0:
        return ch.protos, None
    msg = ch.mix @ w.T
    relu = (msg > 0.0) if frozen is None else frozen[0]
    rt = ch.regions + np.where(relu, msg, 0.0)

    pn = np.sqrt(np.einsum("ij,ij->i", ch.protos, ch.protos))
    rn = np.sqrt(np.einsum("ij,ij->i", rt, rt))
    a = (ch.protos @ rt.T) / np.outer(pn, rn)
    if frozen is None:
        clamp = a > 0.0
        dead = ~clamp.any(axis=1)
    else:
        clamp, dead = frozen[1], frozen[2]
    d = np.where(clamp, a, 0.0)
    s = d.sum(axis=1)
    phi = d / (s + ATTENTION_EPS)[:, None]
    if dead.any():
        phi[dead] = 1.0 / n
    refined = ch.protos + lam * (phi @ rt)
    cache = {
        "relu": relu, "rt": rt, "pn": pn, "rn": rn, "a": a,
        "clamp": clamp, "dead": dead, "d": d, "s": s, "phi": phi,
    }
    return refined, cache


def _grid_scores(g: GridState, refined: list, frozen_arg=None):
    """Fused per-channel scores for one grid. Returns (scores, argmax,
    sims list, feature norms)."""
    fn = np.sqrt(np.einsum("ij,ij->i", g.feats, g.feats))
    n_ch = len(refined)
    cells = g.feats.shape[0]
    scores = np.empty((n_ch, cells))
    argmax = np.empty((n_ch, cells), dtype=np.int64)
    sims_all = []
    for ci, pr in enumerate(refined):
        qn = np.sqrt(np.einsum("ij,ij->i", pr, pr))
        sims = (g.feats @ pr.T) / np.outer(fn, qn)
        arg = np.argmax(sims, axis=1) if frozen_arg is None else frozen_arg[ci]
        scores[ci] = sims[np.arange(cells), arg]
        argmax[ci] = arg
        sims_all.append(sims)
    return scores, argmax, sims_all, fn


def _ce_forward(scores: np.ndarray, g: GridState, temperature: float):
    """Cross entropy plus the softmax needed by the backward pass."""
    if not g.valid.any():
        return 0.0, np.zeros((scores.shape[0], 0))
    logits = temperature * scores[:, g.valid]
    m = logits.max(axis=0)
    ex = np.exp(logits - m)
    p = ex / ex.sum(axis=0)
    lab = g.labels[g.valid]
    idx = np.arange(logits.shape[1])
    ce = float(np.mean((m + np.log(ex.sum(axis=0))) - logits[lab, idx]))
    return ce, p


def forward_loss(
    capture: EpisodeCapture, w: np.ndarray, discrete: DiscreteState | None = None
):
    """Loss of the frozen episode at weight matrix `w`.

    With `discrete` given, its recorded ReLU/clamp/argmax patterns are
    replayed so the loss is a smooth function of `w`; otherwise the
    patterns are recorded from this forward pass and returned.
    """
    w = np.asarray(w, dtype=np.float64)
    record = discrete is None
    refined, caches = [], []
    relu_masks, phi_clamp, phi_dead = [], [], []
    for ci, ch in enumerate(capture.channels):
        frozen = None
        if not record:
            frozen = (
                discrete.relu_masks[ci],
                discrete.phi_clamp[ci],
                discrete.phi_dead[ci],
            )
            if frozen[0] is None:
                frozen = None
        pr, cache = _refine_channel(ch, w, capture.lambda_r, frozen)
        refined.append(pr)
        caches.append(cache)
        relu_masks.append(None if cache is None else cache["relu"])
        phi_clamp.append(None if cache is None else cache["clamp"])
        phi_dead.append(None if cache is None else cache["dead"])

    loss_q, loss_s = 0.0, 0.0
    part_argmax = []
    grid_data = []
    for gi, g in enumerate(capture.grids):
        frozen_arg = None if record else discrete.part_argmax[gi]
        scores, argmax, sims_all, fn = _grid_scores(g, refined, frozen_arg)
        ce, p = _ce_forward(scores, g, capture.temperature)
        if g.is_query:
            loss_q += ce / capture.n_query
        else:
            loss_s += ce / capture.n_support
        part_argmax.append(argmax)
        grid_data.append((scores, p, argmax, sims_all, fn))

    state = DiscreteState(
        tuple(relu_masks), tuple(phi_clamp), tuple(phi_dead), tuple(part_argmax)
    )
    return EpisodeLoss(loss_q, loss_s), state, refined, caches, grid_data


def replay_loss(capture: EpisodeCapture, w: np.ndarray, discrete: DiscreteState) -> float:
    """Total loss at `w` with every discrete decision replayed."""
    loss, _, _, _, _ = forward_loss(capture, w, discrete)
    return loss.total


def gradient_from_capture(capture: EpisodeCapture, w: np.ndarray):
    """Analytic d(total loss)/dW at `w` for a frozen episode.

    Returns (EpisodeLoss, gradient (C, C) float64, DiscreteState).
    """
    w = np.asarray(w, dtype=np.float64)
    loss, state, refined, caches, grid_data = forward_loss(capture, w)
    n_channels = len(capture.channels)
    grad_pr = [np.zeros_like(ch.protos) for ch in capture.channels]

    for g, (scores, p, argmax, sims_all, fn) in zip(capture.grids, grid_data):
        if not g.valid.any():
            continue
        n_valid = int(np.count_nonzero(g.valid))
        set_scale = capture.n_query if g.is_query else capture.n_support
        weight = capture.temperature / (n_valid * set_scale)
        lab = g.labels[g.valid]
        onehot = np.zeros((n_channels, n_valid))
        onehot[lab, np.arange(n_valid)] = 1.0
        g_s = np.zeros((n_channels, g.feats.shape[0]))
        g_s[:, g.valid] = weight * (p - onehot)

        for ci in range(n_channels):
            if caches[ci] is None:
                continue  # constant prototypes, no W path
            pr = refined[ci]
            qn = np.sqrt(np.einsum("ij,ij->i", pr, pr))
            sims = sims_all[ci]
            arg = argmax[ci]
            for part in range(pr.shape[0]):
                sel = (arg == part) & g.valid
                if not sel.any():
                    continue
                gs = g_s[ci, sel]
                feats = g.feats[sel]
                c_vals = sims[sel, part]
                coef = gs / (fn[sel] * qn[part])
                grad_pr[ci][part] += coef @ feats
                grad_pr[ci][part] -= (
                    float(gs @ c_vals) / (qn[part] ** 2)
                ) * pr[part]

    grad_w = np.zeros_like(w)
    lam = capture.lambda_r
    for ci, ch in enumerate(capture.channels):
        cache = caches[ci]
        if cache is None:
            continue
        gp = grad_pr[ci]
        rt, phi, d, s = cache["rt"], cache["phi"], cache["d"], cache["s"]
        a, clamp, dead = cache["a"], cache["clamp"], cache["dead"]
        pn, rn = cache["pn"], cache["rn"]
        n = rt.shape[0]

        g_rt = lam * (phi.T @ gp)
        g_phi = lam * (gp @ rt.T)
        live = ~dead
        if live.any():
            denom = (s + ATTENTION_EPS)[:, None]
            g_d = np.where(
                live[:, None],
                g_phi / denom - ((g_phi * d).sum(axis=1, keepdims=True)) / denom**2,
                0.0,
            )
            g_a = np.where(clamp, g_d, 0.0)
            # a[i, j] = cos(p_i, rt_j) with p constant
            g_rt += (g_a / pn[:, None]).T @ ch.protos / rn[:, None]
            g_rt -= ((g_a * a).sum(axis=0) / rn**2)[:, None] * rt
        g_msg = np.where(cache["relu"], g_rt, 0.0)
        grad_w += g_msg.T @ ch.mix
    return loss, grad_w, state


def approx_gradient_message_weights(
    episode: Episode,
    weights: MessageWeights,
    hp: HyperParams,
    seed: int = 0,
) -> np.ndarray:
    """Gradient of the episode loss with respect to the weight matrix.

    Episodes with no unlabeled data, no selected regions, or a zero
    refinement scale yield an exactly zero gradient.
    """
    if weights.nonparametric:
        raise NonparametricMode("the nonparametric mode has no weight gradient")
    capture = capture_episode(episode, hp, seed)
    if not capture.refinable:
        return np.zeros((episode.channels, episode.channels))
    _, grad, _ = gradient_from_capture(capture, weights.matrix.astype(np.float64))
    return grad


@dataclass(frozen=True)
class TrainResult:
    weights: MessageWeights
    losses: tuple[float, ...]  # loss before each step, then the final loss


def train_message_weights(
    episodes,
    weights: MessageWeights,
    hp: HyperParams,
    lr: float,
    steps: int,
    *,
    momentum: float = 0.0,
    weight_decay: float = 0.0,
    seed: int = 0,
) -> TrainResult:
    """SGD on the weight matrix over a sequence of episodes.

    Episodes are visited round-robin; each step recomputes the forward
    discrete state at the current weights. lr = 0 reproduces the input
    weights bit for bit.
    """
    if weights.nonparametric:
        raise NonparametricMode("cannot train nonparametric weights")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    episodes = list(episodes)
    if not episodes:
        raise ValueError("at least one episode is required")
    captures = [capture_episode(ep, hp, seed) for ep in episodes]
    w = weights.matrix.astype(np.float64)
    vel = np.zeros_like(w)
    losses = []
    for step in range(steps):
        cap = captures[step % len(captures)]
        if not cap.refinable:
            losses.append(loss_at(cap, w))
            continue
        loss, grad, _ = gradient_from_capture(cap, w)
        losses.append(loss.total)
        if weight_decay:
            grad = grad + weight_decay * w
        vel = momentum * vel + grad
        w = w - lr * vel
    losses.append(loss_at(captures[steps % len(captures)], w))
    return TrainResult(
        MessageWeights(w.astype(np.float32), False), tuple(losses)
    )


def loss_at(capture: EpisodeCapture, w: np.ndarray) -> float:
    """Total loss at `w` with discrete decisions recorded fresh."""
    loss, _, _, _, _ = forward_loss(capture, np.asarray(w, dtype=np.float64))
    return loss.total
