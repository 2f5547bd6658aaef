"""Jigsaw-puzzle-solver attack harness and assembly-quality metrics.

The solver is a deterministic greedy assembler driven by Mahalanobis-gradient
boundary compatibility: it seeds with the most compatible pair and grows the
placement one piece at a time inside the known grid bounds. It is a baseline
stand-in for the stronger solvers used in the literature, so scores are
meaningful relatively (scheme A vs scheme B), not as absolute records.

Metrics follow the standard assembly-accuracy trio: direct comparison (Dc),
neighbor comparison (Nc), and largest correctly-joined component (Lc), all
in [0, 1], plus PSNR for image-level comparisons.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BlockGeometry,
    GeometryError,
    RasterImage,
    assemble_blocks,
    split_into_blocks,
)
from .cipher import (
    CipherConfig,
    Scheme,
    TransformSpec,
    apply_d4,
    build_transform_spec,
    d4_inverse,
    encrypt_conventional,
    encrypt_grayscale,
    to_grayscale_composite,
)
from .keystream import KeySet


class Side(enum.Enum):
    """Where piece B sits relative to piece A in pairwise_compatibility."""

    LEFT = "left"
    RIGHT = "right"
    TOP = "top"
    BOTTOM = "bottom"


class SolverMode(enum.Enum):
    PERMUTATION_ONLY = "permutation-only"
    WITH_D4 = "with-d4"


@dataclass(frozen=True)
class AssemblyResult:
    """A solver's placement: grid position -> (piece id, dihedral code)."""

    placement: dict[tuple[int, int], tuple[int, int]]
    grid: BlockGeometry
    oriented: bool = False

    def __post_init__(self):
        n = self.grid.n
        if len(self.placement) != n:
            raise GeometryError(f"placement covers {len(self.placement)} of {n} cells")
        pieces = set()
        for (r, c), (piece, code) in self.placement.items():
            if not (0 <= r < self.grid.rows and 0 <= c < self.grid.cols):
                raise GeometryError(f"position {(r, c)} outside grid")
            if not 0 <= code < 8:
                raise GeometryError(f"invalid d4 code {code}")
            pieces.add(piece)
        if pieces != set(range(n)):
            raise GeometryError("placement is not a bijection over piece ids")


@dataclass(frozen=True)
class MetricsReport:
    """Assembly scores: all ratios in [0, 1]; psnr_db may be math.inf."""

    dc: float
    nc: float
    lc: float
    psnr_db: float = math.nan

    def __post_init__(self):
        for name in ("dc", "nc", "lc"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def score(self) -> float:
        return self.dc + self.nc + self.lc


def truth_assembly(spec: TransformSpec, grid: BlockGeometry, oriented: bool = False) -> AssemblyResult:
    """Ground-truth placement that reconstructs the plain image from the
    encrypted pieces (negation aside): where each piece belongs, and with
    which inverse orientation."""
    if spec.n != grid.n:
        raise GeometryError(f"spec covers {spec.n} blocks, grid has {grid.n}")
    inv = np.empty(spec.n, dtype=np.int64)
    inv[np.asarray(spec.permutation)] = np.arange(spec.n)
    placement = {}
    for p in range(spec.n):
        piece = int(inv[p])
        code = d4_inverse(int(spec.d4_codes[piece])) if oriented else 0
        placement[(p // grid.cols, p % grid.cols)] = (piece, code)
    return AssemblyResult(placement, grid, oriented=oriented)


def _check_same_grid(result: AssemblyResult, truth: AssemblyResult) -> None:
    if result.grid != truth.grid:
        raise GeometryError(
            f"grids differ: {result.grid} vs {truth.grid}"
        )


def direct_comparison(result: AssemblyResult, truth: AssemblyResult) -> float:
    """Fraction of pieces placed at their true position (and, when the
    solver emits orientations, with the true orientation)."""
    _check_same_grid(result, truth)
    use_codes = result.oriented and truth.oriented
    hits = 0
    for pos, (piece, code) in result.placement.items():
        tpiece, tcode = truth.placement[pos]
        if piece == tpiece and (not use_codes or code == tcode):
            hits += 1
    return hits / result.grid.n


def _realized_adjacency_correct(result: AssemblyResult, truth: AssemblyResult):
    """Yield one bool per realized adjacency (right and down neighbors)."""
    use_codes = result.oriented and truth.oriented
    tpos = {piece: pos for pos, (piece, _) in truth.placement.items()}
    tcode = {piece: code for _, (piece, code) in truth.placement.items()}
    rows, cols = result.grid.rows, result.grid.cols
    for r in range(rows):
        for c in range(cols):
            a, ca = result.placement[(r, c)]
            for dr, dc in ((0, 1), (1, 0)):
                if r + dr >= rows or c + dc >= cols:
                    continue
                b, cb = result.placement[(r + dr, c + dc)]
                ta, tb = tpos[a], tpos[b]
                ok = (tb[0] - ta[0], tb[1] - ta[1]) == (dr, dc)
                if use_codes:
                    ok = ok and ca == tcode[a] and cb == tcode[b]
                yield (r, c), (r + dr, c + dc), ok


def neighbor_comparison(result: AssemblyResult, truth: AssemblyResult) -> float:
    """Fraction of realized adjacencies that also hold, with the same
    relative offset, in the ground truth; normalized by the grid's total
    adjacency slots."""
    _check_same_grid(result, truth)
    rows, cols = result.grid.rows, result.grid.cols
    total = rows * (cols - 1) + (rows - 1) * cols
    if total == 0:
        return 1.0
    correct = sum(ok for _, _, ok in _realized_adjacency_correct(result, truth))
    return correct / total


def largest_component(result: AssemblyResult, truth: AssemblyResult) -> float:
    """Size of the largest connected set of pieces whose mutual adjacencies
    are all correct, divided by the piece count."""
    _check_same_grid(result, truth)
    rows, cols = result.grid.rows, result.grid.cols
    parent = list(range(rows * cols))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (r0, c0), (r1, c1), ok in _realized_adjacency_correct(result, truth):
        if ok:
            a, b = find(r0 * cols + c0), find(r1 * cols + c1)
            if a != b:
                parent[a] = b
    sizes = {}
    for cell in range(rows * cols):
        root = find(cell)
        sizes[root] = sizes.get(root, 0) + 1
    return max(sizes.values()) / result.grid.n


def psnr(a: RasterImage | np.ndarray, b: RasterImage | np.ndarray) -> float:
    """10*log10(255^2 / MSE) over all samples jointly; inf for identical."""
    pa = a.pixels if isinstance(a, RasterImage) else np.asarray(a)
    pb = b.pixels if isinstance(b, RasterImage) else np.asarray(b)
    if pa.shape != pb.shape:
        raise GeometryError(f"shape mismatch: {pa.shape} vs {pb.shape}")
    mse = np.mean((pa.astype(np.float64) - pb.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(255.0 ** 2 / mse))


# --- boundary compatibility ---------------------------------------------------

_RIDGE = 1e-3  # covariance regularizer; keeps flat pieces invertible


class _EdgeStats:
    """Per-unit left/right boundary columns and gradient statistics."""

    __slots__ = ("left_edge", "left_mu", "left_sinv", "right_edge", "right_mu", "right_sinv")

    def __init__(self, stack: np.ndarray):
        # stack: (m, h, w, c) float64 with w >= 2
        if stack.shape[2] < 2 or stack.shape[1] < 1:
            raise GeometryError("pieces must be at least 2 samples wide for edge stats")
        c = stack.shape[3]
        eye = np.eye(c) * _RIDGE
        self.right_edge = stack[:, :, -1, :]
        self.right_mu, self.right_sinv = self._grad_stats(
            self.right_edge - stack[:, :, -2, :], eye
        )
        self.left_edge = stack[:, :, 0, :]
        self.left_mu, self.left_sinv = self._grad_stats(
            self.left_edge - stack[:, :, 1, :], eye
        )

    @staticmethod
    def _grad_stats(grad: np.ndarray, eye: np.ndarray):
        mu = grad.mean(axis=1)
        d = grad - mu[:, None, :]
        cov = np.einsum("mrc,mrd->mcd", d, d) / grad.shape[1] + eye
        return mu, np.linalg.inv(cov)


def _cost_chunk(stats_a: _EdgeStats, idx_a: np.ndarray,
                stats_b: _EdgeStats, idx_b: np.ndarray) -> np.ndarray:
    """Costs of placing unit b directly right of unit a, for idx_a x idx_b."""
    G = stats_b.left_edge[idx_b][None, :] - stats_a.right_edge[idx_a][:, None]
    x = G - stats_a.right_mu[idx_a][:, None, None, :]
    d1 = np.einsum("abrc,acd,abrd->ab", x, stats_a.right_sinv[idx_a], x)
    y = -G - stats_b.left_mu[idx_b][None, :, None, :]
    d2 = np.einsum("abrc,bcd,abrd->ab", y, stats_b.left_sinv[idx_b], y)
    return d1 + d2


def _cost_matrix(stats: _EdgeStats, m: int, chunk: int = 64) -> np.ndarray:
    out = np.empty((m, m))
    all_idx = np.arange(m)
    for start in range(0, m, chunk):
        idx = all_idx[start:start + chunk]
        out[idx] = _cost_chunk(stats, idx, stats, all_idx)
    np.fill_diagonal(out, np.inf)
    return out


def _as_piece_stack(pieces) -> np.ndarray:
    stack = np.asarray(pieces)
    if stack.ndim == 3:
        stack = stack[:, :, :, np.newaxis]
    if stack.ndim != 4:
        raise GeometryError(f"expected (n, h, w, c) pieces, got shape {stack.shape}")
    return stack


def pairwise_compatibility(piece_a: np.ndarray, piece_b: np.ndarray, side: Side) -> float:
    """Boundary dissimilarity of placing piece_b on the given side of piece_a.

    Mahalanobis distance of the cross-boundary gradient against each piece's
    own near-edge gradient distribution; lower means more compatible.
    cost(A, B, RIGHT) == cost(B, A, LEFT) by construction.
    """
    a = np.asarray(piece_a)
    b = np.asarray(piece_b)
    if a.shape != b.shape:
        raise GeometryError(f"piece shapes differ: {a.shape} vs {b.shape}")
    if side is Side.LEFT:
        return pairwise_compatibility(piece_b, piece_a, Side.RIGHT)
    if side is Side.TOP:
        return pairwise_compatibility(piece_b, piece_a, Side.BOTTOM)
    if side is Side.BOTTOM:
        axes = (1, 0) if a.ndim == 2 else (1, 0, 2)
        return pairwise_compatibility(a.transpose(axes), b.transpose(axes), Side.RIGHT)
    stack = _as_piece_stack(np.stack([a, b])).astype(np.float64)
    stats = _EdgeStats(stack)
    return float(_cost_chunk(stats, np.array([0]), stats, np.array([1]))[0, 0])


# --- dihedral bookkeeping for the oriented solver -----------------------------


def _build_d4_tables():
    probe = np.arange(9, dtype=np.int32).reshape(3, 3)
    sig = {apply_d4(probe, c).tobytes(): c for c in range(8)}
    compose = [
        [sig[apply_d4(apply_d4(probe, c2), c1).tobytes()] for c2 in range(8)]
        for c1 in range(8)
    ]
    transpose_code = sig[probe.T.tobytes()]
    return compose, transpose_code


_D4_COMPOSE, _D4_TRANSPOSE = _build_d4_tables()


# --- greedy assembly ----------------------------------------------------------

# Full pairwise cost matrices are O(n^2); past this many pieces the attack
# harness refuses rather than thrash memory.
MAX_SOLVER_PIECES = 8192


class _PermutationCosts:
    """Candidate scorer backed by dense right/down cost matrices."""

    units_per_piece = 1

    def __init__(self, stack: np.ndarray):
        n = stack.shape[0]
        f = stack.astype(np.float64)
        self.cost_r = _cost_matrix(_EdgeStats(f), n)
        self.cost_d = _cost_matrix(_EdgeStats(f.transpose(0, 2, 1, 3)), n)
        self.n = n

    def seed(self, grid: BlockGeometry):
        best = (math.inf, 0, 0, 0)  # cost, direction, a, b
        if grid.cols >= 2:
            flat = int(np.argmin(self.cost_r))
            a, b = divmod(flat, self.n)
            best = min(best, (float(self.cost_r[a, b]), 0, a, b))
        if grid.rows >= 2:
            flat = int(np.argmin(self.cost_d))
            a, b = divmod(flat, self.n)
            best = min(best, (float(self.cost_d[a, b]), 1, a, b))
        _, direction, a, b = best
        second = (0, 1) if direction == 0 else (1, 0)
        return [((0, 0), a, 0), (second, b, 0)]

    def best_for_slot(self, neighbors, used: np.ndarray):
        total = np.zeros(self.n)
        for direction, piece, _orient in neighbors:
            if direction == "left":
                total += self.cost_r[piece]
            elif direction == "right":
                total += self.cost_r[:, piece]
            elif direction == "top":
                total += self.cost_d[piece]
            else:
                total += self.cost_d[:, piece]
        total = total / len(neighbors)
        total[used] = np.inf
        j = int(np.argmin(total))
        return float(total[j]), j, 0


class _OrientedCosts:
    """Lazy candidate scorer over (piece, orientation) units.

    Down-adjacency reuses the right-adjacency cost function through the
    transpose remap: stacking B under A equals putting B^T right of A^T, and
    transposing an oriented view is itself a dihedral re-orientation.
    """

    units_per_piece = 8

    def __init__(self, stack: np.ndarray):
        if stack.shape[1] != stack.shape[2]:
            raise GeometryError("orientation search needs square pieces")
        n = stack.shape[0]
        self.n = n
        views = np.empty((n * 8,) + stack.shape[1:], dtype=np.float64)
        for code in range(8):
            sub = stack.astype(np.float64)
            rot = code & 3
            if rot:
                sub = np.rot90(sub, k=-rot, axes=(1, 2))
            if code >> 2:
                sub = sub[:, :, ::-1]
            views[code::8] = sub
        self.stats = _EdgeStats(views)
        self.tmap = np.array(
            [p * 8 + _D4_COMPOSE[_D4_TRANSPOSE][o] for p in range(n) for o in range(8)]
        )

    def _unit(self, piece: int, orient: int) -> int:
        return piece * 8 + orient

    def _row(self, i: int, js: np.ndarray) -> np.ndarray:
        return _cost_chunk(self.stats, np.array([i]), self.stats, js)[0]

    def _col(self, j: int, is_: np.ndarray) -> np.ndarray:
        return _cost_chunk(self.stats, is_, self.stats, np.array([j]))[:, 0]

    def seed(self, grid: BlockGeometry):
        m = self.n * 8
        horizontal = grid.cols >= 2
        # Any vertical pair is some horizontal pair of re-oriented views, so
        # one scan over the right-adjacency costs covers both directions.
        best_cost, best_i, best_j = math.inf, 0, 0
        all_idx = np.arange(m)
        for start in range(0, m, 64):
            idx = all_idx[start:start + 64]
            block = _cost_chunk(self.stats, idx, self.stats, all_idx)
            same = idx[:, None] // 8 == all_idx[None, :] // 8
            block[same] = np.inf
            flat = int(np.argmin(block))
            r, c = divmod(flat, m)
            if block[r, c] < best_cost:
                best_cost, best_i, best_j = float(block[r, c]), int(idx[r]), int(c)
        pa, oa = divmod(best_i, 8)
        pb, ob = divmod(best_j, 8)
        if horizontal:
            return [((0, 0), pa, oa), ((0, 1), pb, ob)]
        # Column grid: realize the pair vertically by undoing the transpose remap.
        inv_t = d4_inverse(_D4_TRANSPOSE)
        oa2 = _D4_COMPOSE[inv_t][oa]
        ob2 = _D4_COMPOSE[inv_t][ob]
        return [((0, 0), pa, oa2), ((1, 0), pb, ob2)]

    def best_for_slot(self, neighbors, used: np.ndarray):
        free_pieces = np.flatnonzero(~used)
        units = (free_pieces[:, None] * 8 + np.arange(8)[None, :]).reshape(-1)
        total = np.zeros(len(units))
        for direction, piece, orient in neighbors:
            u = self._unit(piece, orient)
            if direction == "left":
                total += self._row(u, units)
            elif direction == "right":
                total += self._col(u, units)
            elif direction == "top":
                total += self._row(self.tmap[u], self.tmap[units])
            else:
                total += self._col(self.tmap[u], self.tmap[units])
        total /= len(neighbors)
        k = int(np.argmin(total))
        piece, orient = divmod(int(units[k]), 8)
        return float(total[k]), piece, orient


_DIRS = {(-1, 0): "top", (1, 0): "bottom", (0, -1): "left", (0, 1): "right"}


def greedy_assemble(pieces, grid: BlockGeometry,
                    mode: SolverMode = SolverMode.PERMUTATION_ONLY) -> AssemblyResult:
    """Deterministic greedy placement of pieces into the grid.

    Grows from the most compatible seed pair, repeatedly placing the
    lowest-cost (slot, piece) candidate; WITH_D4 additionally searches the 8
    orientations per piece. Ties break on cost, then slot position, then
    piece id, so identical inputs always assemble identically.
    """
    stack = _as_piece_stack(pieces)
    n = stack.shape[0]
    if n != grid.n:
        raise GeometryError(f"expected {grid.n} pieces, got {n}")
    if (stack.shape[1], stack.shape[2]) != (grid.block_h, grid.block_w):
        raise GeometryError("piece shape does not match grid block size")
    oriented = mode is SolverMode.WITH_D4
    if n == 1:
        return AssemblyResult({(0, 0): (0, 0)}, grid, oriented=oriented)
    if n > MAX_SOLVER_PIECES:
        raise GeometryError(
            f"{n} pieces exceeds the solver cap of {MAX_SOLVER_PIECES}"
        )
    scorer = _OrientedCosts(stack) if oriented else _PermutationCosts(stack)

    rows, cols = grid.rows, grid.cols
    canvas: dict[tuple[int, int], tuple[int, int]] = {}
    used = np.zeros(n, dtype=bool)
    bounds = [0, 0, 0, 0]  # minr, maxr, minc, maxc

    def feasible(pos) -> bool:
        r, c = pos
        return (
            max(bounds[1], r) - min(bounds[0], r) < rows
            and max(bounds[3], c) - min(bounds[2], c) < cols
        )

    def place(pos, piece, orient):
        canvas[pos] = (piece, orient)
        used[piece] = True
        bounds[0] = min(bounds[0], pos[0])
        bounds[1] = max(bounds[1], pos[0])
        bounds[2] = min(bounds[2], pos[1])
        bounds[3] = max(bounds[3], pos[1])

    def slot_neighbors(pos):
        out = []
        for (dr, dc), name in _DIRS.items():
            q = (pos[0] + dr, pos[1] + dc)
            if q in canvas:
                piece, orient = canvas[q]
                # name is where the *neighbor* sits relative to the slot
                out.append((name, piece, orient))
        return out

    for pos, piece, orient in scorer.seed(grid):
        place(pos, piece, orient)

    heap: list = []
    stamp: dict[tuple[int, int], int] = {}

    def push_slot(pos):
        if pos in canvas or not feasible(pos):
            return
        cost, piece, orient = scorer.best_for_slot(slot_neighbors(pos), used)
        heapq.heappush(heap, (cost, pos, piece, orient, stamp.get(pos, 0)))

    def refresh_around(pos):
        for dr, dc in _DIRS:
            q = (pos[0] + dr, pos[1] + dc)
            if q not in canvas:
                stamp[q] = stamp.get(q, 0) + 1
                push_slot(q)

    for pos in list(canvas):
        refresh_around(pos)

    while len(canvas) < n:
        if not heap:  # all queued slots went stale; requeue the frontier
            for pos in list(canvas):
                refresh_around(pos)
            continue
        cost, pos, piece, orient, seen = heapq.heappop(heap)
        if pos in canvas or not feasible(pos):
            continue
        if seen != stamp.get(pos, 0) or used[piece]:
            push_slot(pos)
            continue
        place(pos, piece, orient)
        refresh_around(pos)

    offr, offc = bounds[0], bounds[2]
    placement = {(r - offr, c - offc): v for (r, c), v in canvas.items()}
    return AssemblyResult(placement, grid, oriented=oriented)


def render_assembly(pieces, result: AssemblyResult) -> RasterImage:
    """Paint an assembly back into an image (orientations applied)."""
    stack = _as_piece_stack(pieces)
    grid = result.grid
    ordered = np.empty_like(stack)
    for (r, c), (piece, code) in result.placement.items():
        ordered[r * grid.cols + c] = apply_d4(stack[piece], code)
    return assemble_blocks(ordered, grid)


# --- attack protocol ----------------------------------------------------------


def attack_single(image: RasterImage, keys: KeySet, cfg: CipherConfig,
                  mode: SolverMode = SolverMode.PERMUTATION_ONLY,
                  ) -> tuple[MetricsReport, AssemblyResult]:
    """Encrypt once, attack the scramble, and score the assembly."""
    if cfg.scheme is Scheme.CONVENTIONAL:
        domain_plain = image
        encrypted = encrypt_conventional(image, keys, cfg)
    else:
        domain_plain = to_grayscale_composite(image, cfg.orientation)
        encrypted = encrypt_grayscale(image, keys, cfg)
    geom = BlockGeometry.for_image(
        encrypted.width, encrypted.height, cfg.block_w, cfg.block_h
    )
    spec = build_transform_spec(keys, geom.n)
    pieces = split_into_blocks(encrypted, geom)
    result = greedy_assemble(pieces, geom, mode)
    truth = truth_assembly(spec, geom, oriented=result.oriented)
    report = MetricsReport(
        dc=direct_comparison(result, truth),
        nc=neighbor_comparison(result, truth),
        lc=largest_component(result, truth),
        psnr_db=psnr(render_assembly(pieces, result), domain_plain),
    )
    return report, result


def attack_trial_protocol(image: RasterImage, keys: list[KeySet], cfg: CipherConfig,
                          mode: SolverMode = SolverMode.PERMUTATION_ONLY) -> MetricsReport:
    """Encrypt with each key, attack each scramble, and keep the assembly
    with the highest Dc + Nc + Lc (the attacker's best showing)."""
    if not keys:
        raise ValueError("at least one key set is required")
    best: MetricsReport | None = None
    for keyset in keys:
        report, _ = attack_single(image, keyset, cfg, mode)
        if best is None or report.score > best.score:
            best = report
    return best
