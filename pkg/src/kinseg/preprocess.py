"""Raw-pose ingestion chain: low-pass filter + resample, velocities,
per-procedure standardization, and the robotic 76-column extraction.

Pipeline order is fixed: raw poses -> (hand inversion) -> (world frame
rotation) -> velocities -> standardize.  Augmentations always see absolute
poses, never velocity-space data.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import signal

from .geometry import matrix_to_euler
from .sequence import FeatureSequence, SensorSequence, get_layout

log = logging.getLogger(__name__)

PASS_HZ = 10.0
STOP_HZ = 15.0
PASS_RIPPLE_DB = 3.91
STOP_ATTEN_DB = 33.511
TARGET_HZ = 30.0


def design_lowpass(rate_hz: float, method: str = "kaiser") -> np.ndarray:
    """Linear-phase FIR taps meeting the band spec at the given rate.

    Pass band to 10 Hz (ripple <= 3.91 dB), stop band from 15 Hz
    (attenuation >= 33.511 dB).  `kaiser` sizes a Kaiser window for the
    stop-band deviation (which also over-satisfies the loose pass-band
    ripple); `remez` is the equiripple alternative behind the same
    interface.
    """
    nyq = rate_hz / 2.0
    if STOP_HZ >= nyq:
        raise ValueError(f"rate {rate_hz} Hz too low for a {STOP_HZ} Hz stop band")
    delta_stop = 10.0 ** (-STOP_ATTEN_DB / 20.0)
    if method == "kaiser":
        numtaps, beta = signal.kaiserord(STOP_ATTEN_DB + 0.5,
                                         (STOP_HZ - PASS_HZ) / nyq)
        numtaps += 1 - numtaps % 2  # odd length -> integer group delay
        return signal.firwin(numtaps, (PASS_HZ + STOP_HZ) / 2.0,
                             window=("kaiser", beta), fs=rate_hz)
    if method == "remez":
        delta_pass = (10.0 ** (PASS_RIPPLE_DB / 20.0) - 1.0) / \
                     (10.0 ** (PASS_RIPPLE_DB / 20.0) + 1.0)
        numtaps, _, _, _ = _remez_order(rate_hz, delta_pass, delta_stop)
        taps = signal.remez(numtaps, [0, PASS_HZ, STOP_HZ, nyq], [1, 0],
                            weight=[delta_stop / delta_pass, 1.0], fs=rate_hz)
        return taps
    raise ValueError(f"unknown design method {method!r}")


def _remez_order(rate_hz, delta_pass, delta_stop):
    # Bellanger's estimate, padded and forced odd.
    df = (STOP_HZ - PASS_HZ) / rate_hz
    n = int(2.0 / 3.0 * np.log10(1.0 / (10.0 * delta_pass * delta_stop)) / df) + 5
    n += 1 - n % 2
    return n, delta_pass, delta_stop, df


def _filter_channels(channels: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Apply taps per channel with edge-replication padding (no phase shift,
    no startup droop on constant signals)."""
    half = (len(taps) - 1) // 2
    padded = np.pad(channels, ((half, half), (0, 0)), mode="edge")
    out = signal.fftconvolve(padded, taps[:, None], mode="valid", axes=0)
    return np.ascontiguousarray(out)


def resample_indices(n_frames: int, rate_hz: float, target_hz: float) -> np.ndarray:
    """Nearest-index decimation grid: frame i of the output maps to input
    index round(i * rate / target); output length floor((T-1)*target/rate)+1."""
    n_out = int(np.floor((n_frames - 1) * target_hz / rate_hz)) + 1
    return np.round(np.arange(n_out) * rate_hz / target_hz).astype(np.int64)


def fir_lowpass_resample(seq: SensorSequence, target_hz: float = TARGET_HZ,
                         method: str = "kaiser") -> SensorSequence:
    """Low-pass filter then decimate to target_hz; labels follow by nearest
    index.  A no-op when the sequence is already at the target rate."""
    if seq.rate_hz < target_hz:
        raise ValueError(f"cannot resample {seq.rate_hz} Hz up to {target_hz} Hz")
    if seq.rate_hz == target_hz:
        return seq
    taps = design_lowpass(seq.rate_hz, method=method)
    filtered = _filter_channels(seq.channels, taps)
    idx = resample_indices(seq.n_frames, seq.rate_hz, target_hz)
    out = seq.copy()
    out.channels = filtered[idx]
    out.labels = seq.labels[idx]
    out.rate_hz = target_hz
    return out


def wrap_degrees(diff: np.ndarray) -> np.ndarray:
    """Map angle differences to the shortest arc in [-180, 180)."""
    return (diff + 180.0) % 360.0 - 180.0


def velocities(seq: SensorSequence) -> FeatureSequence:
    """First differences per channel, length preserving (frame 0 is zeros).

    Euler channels are differenced with +-180 degree wraparound correction so
    a crossing like 179 -> -179 yields +2, not -358.
    """
    if seq.n_frames < 2:
        raise ValueError("velocities need at least two frames")
    diffs = np.zeros_like(seq.channels)
    diffs[1:] = seq.channels[1:] - seq.channels[:-1]
    angular = seq.layout_info.angular_mask()
    diffs[1:, angular] = wrap_degrees(diffs[1:, angular])
    return FeatureSequence(features=diffs, labels=seq.labels.copy(),
                           rate_hz=seq.rate_hz, name=seq.name)


def standardize(fs: FeatureSequence) -> FeatureSequence:
    """Per-channel z-score using this sequence's own statistics (population
    std).  Channels with zero variance become all zeros and are reported."""
    if fs.n_frames < 2:
        raise ValueError("standardize needs at least two frames")
    mean = fs.features.mean(axis=0)
    std = fs.features.std(axis=0)
    dead = np.flatnonzero(std == 0.0)
    if dead.size:
        log.warning("zero-variance channels %s standardized to zeros",
                    dead.tolist())
    safe = np.where(std == 0.0, 1.0, std)
    feats = (fs.features - mean) / safe
    feats[:, dead] = 0.0
    return FeatureSequence(features=feats, labels=fs.labels.copy(),
                           rate_hz=fs.rate_hz, name=fs.name, standardized=True,
                           zero_variance_channels=tuple(int(i) for i in dead))


JIGSAWS_COLS = 76
_BLOCK = 19  # pos 3 + rotation 9 + lin vel 3 + ang vel 3 + gripper 1
_PSM1_OFF = 2 * _BLOCK  # blocks: MTML, MTMR, PSM1, PSM2
_PSM2_OFF = 3 * _BLOCK


def _gram_schmidt(r: np.ndarray) -> np.ndarray:
    q = np.empty_like(r)
    q[:, 0] = r[:, 0] / np.linalg.norm(r[:, 0])
    v = r[:, 1] - (q[:, 0] @ r[:, 1]) * q[:, 0]
    q[:, 1] = v / np.linalg.norm(v)
    v = r[:, 2] - (q[:, 0] @ r[:, 2]) * q[:, 0] - (q[:, 1] @ r[:, 2]) * q[:, 1]
    q[:, 2] = v / np.linalg.norm(v)
    return q


def jigsaws_extract(raw76: np.ndarray, labels: np.ndarray | None = None,
                    rate_hz: float = TARGET_HZ, name: str = "") -> SensorSequence:
    """Reduce the 76-column robotic kinematics rows to the 14-channel layout.

    Per patient-side manipulator: 3 positions, 3 Euler angles extracted from
    the stored rotation matrix, and the gripper angle.  Rotation blocks that
    are not orthogonal within 1e-3 are re-orthogonalized (with a warning)
    before extraction.
    """
    raw76 = np.asarray(raw76, dtype=np.float64)
    if raw76.ndim != 2 or raw76.shape[1] != JIGSAWS_COLS:
        raise ValueError(f"expected T x {JIGSAWS_COLS} kinematics, got {raw76.shape}")
    t_len = raw76.shape[0]
    out = np.empty((t_len, 14), dtype=np.float64)
    for side, off in enumerate((_PSM1_OFF, _PSM2_OFF)):
        out[:, side * 7:side * 7 + 3] = raw76[:, off:off + 3]
        rmats = raw76[:, off + 3:off + 12].reshape(t_len, 3, 3)
        errs = np.abs(np.einsum("tij,tik->tjk", rmats, rmats)
                      - np.eye(3)).max(axis=(1, 2))
        bad = np.flatnonzero(errs > 1e-3)
        if bad.size:
            log.warning("PSM%d: %d non-orthogonal rotation rows (worst %.2e), "
                        "re-orthogonalizing", side + 1, bad.size, errs.max())
            rmats = rmats.copy()
            for i in bad:
                rmats[i] = _gram_schmidt(rmats[i])
        out[:, side * 7 + 3:side * 7 + 6] = matrix_to_euler(rmats)
        out[:, side * 7 + 6] = raw76[:, off + 18]
    if labels is None:
        labels = np.zeros(t_len, dtype=np.int64)
    return SensorSequence(channels=out, labels=labels, rate_hz=rate_hz,
                          layout="robotic_2psm", name=name)
