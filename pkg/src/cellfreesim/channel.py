"""Channel synthesis and measured-channel ingestion.

Synthetic channels follow a distance path-loss law plus log-normal shadowing
for the large-scale gain and i.i.d. Rayleigh fading for the small-scale part.
Measured channels are read from a self-describing binary container (or a CSV
variant for small cases) in which every AP-UE link carries F frequency
realizations; each frequency index is treated as one flat-fading realization.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MalformedDataset, NonPositiveDistance
from .scenario import Topology, link_distance_matrix

DEFAULT_INDOOR_PENALTY_DB = 20.0

_MAGIC = b"CFMDATA1"


@dataclass(frozen=True)
class PathLossModel:
    """Distance law  loss_dB(d) = intercept + slope * log10(d / reference_distance),
    clamped at the intercept below the reference distance, with log-normal
    shadowing of standard deviation shadow_sigma (dB)."""

    intercept: float
    slope: float
    reference_distance: float = 1.0
    shadow_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.slope <= 0:
            raise ValueError("slope must be positive")
        if self.reference_distance <= 0:
            raise ValueError("reference_distance must be positive")
        if self.shadow_sigma < 0:
            raise ValueError("shadow_sigma must be nonnegative")


LITERATURE_MODEL = PathLossModel(intercept=30.5, slope=36.7, reference_distance=1.0, shadow_sigma=4.0)
ADJUSTED_MODEL = PathLossModel(intercept=68.3568, slope=52.3, reference_distance=25.0, shadow_sigma=9.0)

PATH_LOSS_PRESETS = {"literature": LITERATURE_MODEL, "adjusted": ADJUSTED_MODEL}


@dataclass
class ChannelState:
    """One flat-fading realization bundle for M antennas and K UEs."""

    H: np.ndarray  # (M, K) complex, true channel
    beta: np.ndarray  # (M, K) large-scale gains
    H_hat: np.ndarray  # (M, K) complex, channel estimate
    err_var: np.ndarray  # (M, K) per-antenna estimation-error variances
    indoor_penalty_applied: bool = False

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]


def path_loss_db(model: PathLossModel, d) -> np.ndarray | float:
    """Path loss in dB at distance(s) d; clamped to the intercept below the
    reference distance to avoid unrealistically low losses at short range."""
    arr = np.asarray(d, dtype=float)
    if np.any(arr <= 0):
        raise NonPositiveDistance("link distance must be positive")
    ratio = np.maximum(arr / model.reference_distance, 1.0)
    loss = model.intercept + model.slope * np.log10(ratio)
    return float(loss) if np.isscalar(d) else loss


def draw_large_scale(
    topology: Topology,
    model: PathLossModel,
    rng: np.random.Generator,
    indoor_penalty_db: float = DEFAULT_INDOOR_PENALTY_DB,
) -> np.ndarray:
    """Draw the (M, K) large-scale gain matrix.

    Path loss and one shadowing value are computed per (AP, UE) pair from the
    AP anchor position, then copied to all antennas of the AP, so co-located
    antennas share the same gain. Indoor UEs incur an extra fixed loss.
    """
    d = link_distance_matrix(topology.aps.anchors, topology.ues.positions)  # (L, K)
    loss = path_loss_db(model, d)
    shadow = rng.normal(0.0, 1.0, size=d.shape) * model.shadow_sigma
    beta_db = -(loss + shadow)
    indoor = topology.ues.indoor
    if indoor.any():
        beta_db[:, indoor] -= indoor_penalty_db
    beta_per_ap = 10.0 ** (beta_db / 10.0)
    return beta_per_ap[topology.aps.ap_index, :]


def draw_small_scale(M: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """(M, K) i.i.d. circularly-symmetric complex normal entries, E|g|^2 = 1."""
    if M < 1 or K < 1:
        raise ValueError("M and K must be >= 1")
    re = rng.standard_normal((M, K))
    im = rng.standard_normal((M, K))
    return (re + 1j * im) / np.sqrt(2.0)


def realize(beta: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Combine large- and small-scale fading: H = sqrt(beta) * g elementwise."""
    beta = np.asarray(beta, dtype=float)
    g = np.asarray(g)
    if beta.shape != g.shape:
        raise ValueError(f"shape mismatch: beta {beta.shape} vs g {g.shape}")
    return np.sqrt(beta) * g


# ---------------------------------------------------------------------------
# Measured-channel container
# ---------------------------------------------------------------------------


@dataclass
class MeasuredDataset:
    """Per-link frequency sweeps between antenna locations and UE locations.

    coefficients has shape (M_locations, K_locations, F); each frequency index
    is usable as one flat-fading realization. Coordinates are optional in the
    CSV variant; operations that need geometry (e.g. path-loss fitting) check.
    """

    coefficients: np.ndarray  # (Mloc, Kloc, F) complex
    antenna_coords: np.ndarray | None = None  # (Mloc, 3)
    ue_coords: np.ndarray | None = None  # (Kloc, 3)

    @property
    def M_locations(self) -> int:
        return self.coefficients.shape[0]

    @property
    def K_locations(self) -> int:
        return self.coefficients.shape[1]

    @property
    def F(self) -> int:
        return self.coefficients.shape[2]

    def validate(self) -> None:
        c = self.coefficients
        if c.ndim != 3 or c.shape[2] < 1:
            raise MalformedDataset("coefficients must be (M, K, F) with F >= 1")
        if not np.all(np.isfinite(c.real)) or not np.all(np.isfinite(c.imag)):
            raise MalformedDataset("non-finite channel coefficient")
        if (self.antenna_coords is None) != (self.ue_coords is None):
            raise MalformedDataset("coordinates must be given for both ends or neither")
        if self.antenna_coords is not None:
            if self.antenna_coords.shape != (self.M_locations, 3):
                raise MalformedDataset("antenna coordinate table has the wrong shape")
            if self.ue_coords.shape != (self.K_locations, 3):
                raise MalformedDataset("UE coordinate table has the wrong shape")
            coords = np.concatenate([self.antenna_coords, self.ue_coords])
            if not np.all(np.isfinite(coords)):
                raise MalformedDataset("non-finite coordinate")


def beta_from_measured(dataset: MeasuredDataset) -> np.ndarray:
    """Average large-scale gain per link: mean of |h|^2 over frequency indices."""
    return np.mean(np.abs(dataset.coefficients) ** 2, axis=2)


def save_measured(dataset: MeasuredDataset, path) -> None:
    """Write the binary container (little-endian, float64 re/im pairs)."""
    dataset.validate()
    if dataset.antenna_coords is None:
        raise MalformedDataset("binary container requires coordinates")
    m, k, f = dataset.M_locations, dataset.K_locations, dataset.F
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", m, k, f))
        fh.write(np.ascontiguousarray(dataset.antenna_coords, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(dataset.ue_coords, dtype="<f8").tobytes())
        interleaved = np.empty((m, k, f, 2), dtype="<f8")
        interleaved[..., 0] = dataset.coefficients.real
        interleaved[..., 1] = dataset.coefficients.imag
        fh.write(interleaved.tobytes())


def save_measured_csv(dataset: MeasuredDataset, path) -> None:
    """Write the plain-text variant: header m,k,i,re,im and one row per sample."""
    dataset.validate()
    with open(path, "w", newline="") as fh:
        fh.write("m,k,i,re,im\n")
        c = dataset.coefficients
        for m in range(c.shape[0]):
            for k in range(c.shape[1]):
                for i in range(c.shape[2]):
                    v = c[m, k, i]
                    fh.write(f"{m},{k},{i},{float(v.real)!r},{float(v.imag)!r}\n")


def _load_measured_binary(raw: bytes) -> MeasuredDataset:
    header = struct.calcsize("<III")
    if len(raw) < len(_MAGIC) + header:
        raise MalformedDataset("file too short for the binary header")
    m, k, f = struct.unpack_from("<III", raw, len(_MAGIC))
    if min(m, k, f) < 1:
        raise MalformedDataset("header dimensions must be positive")
    off = len(_MAGIC) + header
    need_coords = (m + k) * 3 * 8
    need_data = m * k * f * 16
    if len(raw) != off + need_coords + need_data:
        raise MalformedDataset(
            f"file length {len(raw)} does not match header dimensions {(m, k, f)}"
        )
    ap_coords = np.frombuffer(raw, dtype="<f8", count=m * 3, offset=off).reshape(m, 3)
    off += m * 3 * 8
    ue_coords = np.frombuffer(raw, dtype="<f8", count=k * 3, offset=off).reshape(k, 3)
    off += k * 3 * 8
    pairs = np.frombuffer(raw, dtype="<f8", count=m * k * f * 2, offset=off)
    pairs = pairs.reshape(m, k, f, 2)
    coeffs = pairs[..., 0] + 1j * pairs[..., 1]
    ds = MeasuredDataset(coeffs, ap_coords.copy(), ue_coords.copy())
    ds.validate()
    return ds


def _load_measured_csv(path) -> MeasuredDataset:
    entries = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != ["m", "k", "i", "re", "im"]:
            raise MalformedDataset("CSV variant must start with header m,k,i,re,im")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedDataset(f"line {lineno}: expected 5 columns")
            try:
                m, k, i = int(row[0]), int(row[1]), int(row[2])
                val = complex(float(row[3]), float(row[4]))
            except ValueError as exc:
                raise MalformedDataset(f"line {lineno}: {exc}") from exc
            if min(m, k, i) < 0:
                raise MalformedDataset(f"line {lineno}: negative index")
            if (m, k, i) in entries:
                raise MalformedDataset(f"line {lineno}: duplicate sample ({m},{k},{i})")
            entries[(m, k, i)] = val
    if not entries:
        raise MalformedDataset("CSV variant contains no samples")
    ms = max(m for m, _, _ in entries) + 1
    ks = max(k for _, k, _ in entries) + 1
    fs = max(i for _, _, i in entries) + 1
    if len(entries) != ms * ks * fs:
        raise MalformedDataset("CSV variant is missing samples for some (m,k,i)")
    coeffs = np.empty((ms, ks, fs), dtype=complex)
    for (m, k, i), val in entries.items():
        coeffs[m, k, i] = val
    ds = MeasuredDataset(coeffs)
    ds.validate()
    return ds


def load_measured(path) -> MeasuredDataset:
    """Load a measured-channel file; binary container or CSV variant."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head == _MAGIC:
            return _load_measured_binary(head + fh.read())
    return _load_measured_csv(path)


def fit_path_loss(dataset: MeasuredDataset) -> PathLossModel:
    """Least-squares fit of (intercept, slope) on loss dB vs log10(d/ref).

    The reference distance is the minimum link distance in the dataset, and
    the shadowing sigma is the residual standard deviation of the fit.
    """
    if dataset.antenna_coords is None:
        raise MalformedDataset("path-loss fitting requires link coordinates")
    beta = beta_from_measured(dataset)
    if np.any(beta <= 0):
        raise MalformedDataset("zero-power link; cannot express loss in dB")
    d = link_distance_matrix(dataset.antenna_coords, dataset.ue_coords)
    if np.any(d <= 0):
        raise MalformedDataset("coincident antenna and UE locations")
    loss = -10.0 * np.log10(beta).ravel()
    ref = float(d.min())
    x = np.log10(d.ravel() / ref)
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, loss, rcond=None)
    resid = loss - design @ coef
    sigma = float(np.sqrt(np.mean(resid**2)))
    return PathLossModel(
        intercept=float(coef[0]),
        slope=float(coef[1]),
        reference_distance=ref,
        shadow_sigma=sigma,
    )
