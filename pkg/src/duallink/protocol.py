"""Squeezed-state protocol layer: covariance matrices, quadrature
simulation, and the classical bit stream sharing the same mode.

Alice taps a displaced, modulated mode (q-variance ``Va``) with a
squeezed ancilla (q-variance ``Vs``) on a beamsplitter of
transmissivity ``eps``.  The transmitted port carries q-variance
``eps*Va + (1-eps)*Vs``; choosing ``eps`` so that this equals the
vacuum variance makes the amplitude quadrature of the channel output
indistinguishable from vacuum, and a passive eavesdropper collecting
the lost light learns nothing from it.  All variances are in shot-noise
units where vacuum has variance 1.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import ChannelEnsemble, FadingStats
from .errors import PhysicalityError, UsageError

__all__ = [
    "SqueezingParams",
    "CovarianceMatrix",
    "ClassicalLayer",
    "EmpiricalMoments",
    "LinearizationWarning",
    "zero_leakage_epsilon",
    "covariance_matrix",
    "alice_bob_correlation",
    "eve_bob_correlation",
    "mc_quadrature_sim",
    "estimate_eta_from_carrier",
    "linearized_direct_detection",
    "classical_snr",
    "classical_ber",
    "moments_to_csv",
]

# |eps*Va + (1-eps)*Vs - 1| below this counts as zero-leakage.
_LEAKAGE_TOLERANCE = 1e-12

# Symplectic eigenvalues may dip this far below 1 from rounding.
_SYMPLECTIC_SLACK = 1e-9


class LinearizationWarning(UserWarning):
    """Carrier amplitude too small for the linearized detection model."""


def zero_leakage_epsilon(squeezed_variance: float, modulation_variance: float) -> float:
    """Tap transmissivity that makes the transmitted q-variance exactly 1.

    Solves eps*Va + (1-eps)*Vs = 1 for eps, which lands in (0, 1)
    whenever 0 < Vs < 1 < Va.
    """
    _require_variance_ordering(squeezed_variance, modulation_variance)
    return (1.0 - squeezed_variance) / (modulation_variance - squeezed_variance)


def _require_variance_ordering(vs: float, va: float) -> None:
    if not (0.0 < vs < 1.0):
        raise UsageError(f"squeezed variance must be in (0, 1), got {vs}")
    if not (va > 1.0):
        raise UsageError(f"modulation variance must exceed 1, got {va}")
    if not (math.isfinite(vs) and math.isfinite(va)):
        raise UsageError("variances must be finite")


@dataclass(frozen=True)
class SqueezingParams:
    """Source settings: squeezed variance, modulation variance, tap ratio.

    ``tap_transmissivity`` is the beamsplitter transmissivity applied to
    the modulated mode; the squeezed ancilla enters the other port.
    """

    squeezed_variance: float
    modulation_variance: float
    tap_transmissivity: float

    def __post_init__(self) -> None:
        _require_variance_ordering(self.squeezed_variance, self.modulation_variance)
        if not (0.0 < self.tap_transmissivity < 1.0):
            raise UsageError(
                f"tap transmissivity must be in (0, 1), got {self.tap_transmissivity}"
            )

    @classmethod
    def zero_leakage(
        cls, squeezed_variance: float, modulation_variance: float | None = None
    ) -> "SqueezingParams":
        """Parameters with the tap set for zero leakage.

        Omitting ``modulation_variance`` pairs the squeezing with the
        anti-squeezed variance 1/Vs, so quoting a squeezing level in dB
        fixes both variances at once.
        """
        vs = squeezed_variance
        va = 1.0 / vs if modulation_variance is None else modulation_variance
        return cls(vs, va, zero_leakage_epsilon(vs, va))

    @classmethod
    def from_squeezing_db(
        cls, squeezing_db: float, modulation_variance: float | None = None
    ) -> "SqueezingParams":
        """Zero-leakage parameters from a squeezing level in dB (positive)."""
        if squeezing_db <= 0.0:
            raise UsageError(f"squeezing level must be positive dB, got {squeezing_db}")
        return cls.zero_leakage(10.0 ** (-squeezing_db / 10.0), modulation_variance)

    @property
    def transmitted_q_variance(self) -> float:
        eps = self.tap_transmissivity
        return eps * self.modulation_variance + (1.0 - eps) * self.squeezed_variance

    @property
    def transmitted_p_variance(self) -> float:
        eps = self.tap_transmissivity
        return eps / self.modulation_variance + (1.0 - eps) / self.squeezed_variance

    @property
    def is_zero_leakage(self) -> bool:
        return abs(self.transmitted_q_variance - 1.0) <= _LEAKAGE_TOLERANCE


@dataclass(frozen=True)
class CovarianceMatrix:
    """Two-mode Gaussian covariance matrix in block-diagonal form.

    Basis order is (q_A, p_A, q_B, p_B); the q and p sectors do not
    mix, so six entries determine the matrix.  Construction verifies
    that both single-mode blocks obey the uncertainty relation and that
    the joint state is physical (symplectic eigenvalues >= 1).
    """

    a_q: float
    a_p: float
    b_q: float
    b_p: float
    c_q: float
    c_p: float

    def __post_init__(self) -> None:
        for name in ("a_q", "a_p", "b_q", "b_p"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise PhysicalityError(f"{name} must be positive and finite, got {value}")
        if self.a_q * self.a_p < 1.0 - _SYMPLECTIC_SLACK:
            raise PhysicalityError(
                f"mode A violates uncertainty: a_q*a_p = {self.a_q * self.a_p}"
            )
        if self.b_q * self.b_p < 1.0 - _SYMPLECTIC_SLACK:
            raise PhysicalityError(
                f"mode B violates uncertainty: b_q*b_p = {self.b_q * self.b_p}"
            )
        # Physicality means both symplectic eigenvalues are >= 1, i.e.
        # both roots of t^2 - delta*t + det lie at or above 1.  Testing
        # root location polynomially avoids the catastrophic
        # cancellation the explicit square-root formula hits for pure
        # states, where the two eigenvalues coincide at 1.
        delta, det_full = self._invariants()
        scale = 1.0 + delta + abs(det_full)
        tol = _SYMPLECTIC_SLACK * scale
        if delta < 2.0 - tol or 1.0 - delta + det_full < -tol:
            nu_minus = self.symplectic_eigenvalues()[1]
            raise PhysicalityError(
                f"unphysical covariance matrix: smaller symplectic eigenvalue {nu_minus}"
            )

    def as_array(self) -> np.ndarray:
        """Dense 4x4 matrix in (q_A, p_A, q_B, p_B) order."""
        return np.array(
            [
                [self.a_q, 0.0, self.c_q, 0.0],
                [0.0, self.a_p, 0.0, self.c_p],
                [self.c_q, 0.0, self.b_q, 0.0],
                [0.0, self.c_p, 0.0, self.b_p],
            ]
        )

    def _invariants(self) -> tuple[float, float]:
        det_a = self.a_q * self.a_p
        det_b = self.b_q * self.b_p
        det_c = self.c_q * self.c_p
        det_full = (self.a_q * self.b_q - self.c_q**2) * (
            self.a_p * self.b_p - self.c_p**2
        )
        return det_a + det_b + 2.0 * det_c, det_full

    def symplectic_eigenvalues(self) -> tuple[float, float]:
        """Symplectic spectrum (larger first) of the two-mode matrix.

        Near-degenerate spectra (pure states) lose about half the
        working precision to cancellation under the square root, so
        the returned values are accurate to roughly 1e-7 there.
        """
        delta, det_full = self._invariants()
        # Clamp tiny negative discriminants from cancellation.
        disc = math.sqrt(max(delta**2 - 4.0 * det_full, 0.0))
        nu_plus = math.sqrt(max((delta + disc) / 2.0, 0.0))
        nu_minus = math.sqrt(max((delta - disc) / 2.0, 0.0))
        return nu_plus, nu_minus


def covariance_matrix(params: SqueezingParams, stats: FadingStats) -> CovarianceMatrix:
    """Alice-Bob covariance matrix over a fading channel.

    Alice's block depends only on the source.  Bob's variances mix the
    transmitted variance with vacuum using the full mean transmissivity,
    while the correlations scale with <sqrt(eta)>, so fading (the gap
    between the two averages) decorrelates the modes without changing
    Bob's marginal.  With the tap set for zero leakage the transmitted
    q-variance is 1 and b_q stays at the vacuum level for any fading
    distribution.
    """
    eps = params.tap_transmissivity
    va = params.modulation_variance
    vs = params.squeezed_variance

    a_q = (1.0 - eps) * va + eps * vs
    a_p = (1.0 - eps) / va + eps / vs
    b_q = 1.0 + stats.mean_eta * (params.transmitted_q_variance - 1.0)
    b_p = 1.0 + stats.mean_eta * (params.transmitted_p_variance - 1.0)
    root_eta_f = math.sqrt(stats.eta_f)
    cross = math.sqrt(eps * (1.0 - eps))
    c_q = root_eta_f * cross * (va - vs)
    c_p = root_eta_f * cross * (1.0 / va - 1.0 / vs)
    return CovarianceMatrix(a_q, a_p, b_q, b_p, c_q, c_p)


def alice_bob_correlation(params: SqueezingParams, eta: float) -> float:
    """<X_A X_B> through a fixed-transmissivity channel.

    For a zero-leakage tap this equals
    sqrt(eta) * sqrt(Va - 1) * sqrt(1 - Vs).
    """
    _require_transmissivity(eta)
    eps = params.tap_transmissivity
    return (
        math.sqrt(eta)
        * math.sqrt(eps * (1.0 - eps))
        * (params.modulation_variance - params.squeezed_variance)
    )


def eve_bob_correlation(params: SqueezingParams, eta: float) -> float:
    """<X_E X_B> for a passive eavesdropper holding the lost light.

    The correlation is sqrt(eta(1-eta)) times the excess of the
    transmitted q-variance over vacuum, so it vanishes identically for
    a zero-leakage tap and at either end of the transmissivity range.
    """
    _require_transmissivity(eta)
    if params.is_zero_leakage:
        return 0.0
    return math.sqrt(eta * (1.0 - eta)) * (params.transmitted_q_variance - 1.0)


def _require_transmissivity(eta: float) -> None:
    if not (0.0 <= eta <= 1.0) or not math.isfinite(eta):
        raise UsageError(f"transmissivity must be in [0, 1], got {eta}")


@dataclass(frozen=True)
class ClassicalLayer:
    """Binary classical signal riding the amplitude quadrature.

    Each symbol displaces the transmitted mode by +-2*displacement in q
    (displacement in amplitude units, so the mean separation between
    the two symbols at the receiver is 4*displacement*sqrt(eta)).  The
    bright carrier of amplitude ``carrier_amplitude`` provides the
    phase reference and the per-shot transmissivity estimate.
    """

    displacement: float
    carrier_amplitude: float

    def __post_init__(self) -> None:
        # displacement 0 is allowed: it turns the classical layer off,
        # which is useful for isolating the quantum statistics.
        if self.displacement < 0.0 or not math.isfinite(self.displacement):
            raise UsageError(f"displacement must be nonnegative, got {self.displacement}")
        if self.carrier_amplitude <= 0.0 or not math.isfinite(self.carrier_amplitude):
            raise UsageError(
                f"carrier amplitude must be positive, got {self.carrier_amplitude}"
            )


@dataclass(frozen=True)
class EmpiricalMoments:
    """Second moments and bit errors from a quadrature-level simulation.

    Moments are raw second moments (not mean-subtracted) over all shots
    and all channel realizations.  Eve's p-quadrature moments are
    reported for completeness even though no key-rate quantity uses
    them.
    """

    n_shots: int
    bit_errors: int
    xa_xa: float
    xb_xb: float
    xe_xe: float
    xa_xb: float
    xe_xb: float
    pa_pa: float
    pb_pb: float
    pe_pe: float
    pa_pb: float
    pe_pb: float

    @property
    def bit_error_rate(self) -> float:
        return self.bit_errors / self.n_shots


def mc_quadrature_sim(
    params: SqueezingParams,
    classical: ClassicalLayer,
    channel: ChannelEnsemble | Sequence[float],
    shots_per_eta: int,
    rng: np.random.Generator,
) -> EmpiricalMoments:
    """Monte Carlo run of the full transmitter-channel-receiver chain.

    For each channel realization, draws ``shots_per_eta`` independent
    shots: Gaussian modes through the tap, the channel beamsplitter
    against vacuum, the classical displacement, Bob's threshold bit
    decision at zero, and subtraction of the decided classical signal
    scaled by the carrier-derived transmissivity estimate.  Eve's
    moments subtract the true symbol, crediting her with perfect
    knowledge of the classical stream.  Bob's post-subtraction moments
    therefore carry his decision errors while Eve's do not.
    """
    etas = channel.etas if isinstance(channel, ChannelEnsemble) else tuple(channel)
    if not etas:
        raise UsageError("channel must contain at least one realization")
    for eta in etas:
        _require_transmissivity(eta)
    if shots_per_eta < 1:
        raise UsageError(f"shots_per_eta must be at least 1, got {shots_per_eta}")

    eps = params.tap_transmissivity
    va = params.modulation_variance
    vs = params.squeezed_variance
    alpha = classical.displacement
    beta_c = classical.carrier_amplitude

    keep_a = math.sqrt(1.0 - eps)
    keep_s = math.sqrt(eps)
    sums = np.zeros(10)
    bit_errors = 0
    for eta in etas:
        t = math.sqrt(eta)
        r = math.sqrt(1.0 - eta)
        # Carrier power measurement feeds the subtraction step.
        eta_hat = estimate_eta_from_carrier(eta * beta_c**2, beta_c)
        signal = 2.0 * alpha * math.sqrt(eta_hat)

        bits = np.where(rng.integers(0, 2, shots_per_eta) == 1, 1.0, -1.0)
        x_a = rng.standard_normal(shots_per_eta) * math.sqrt(va)
        x_s = rng.standard_normal(shots_per_eta) * math.sqrt(vs)
        x_v = rng.standard_normal(shots_per_eta)
        p_a = rng.standard_normal(shots_per_eta) / math.sqrt(va)
        p_s = rng.standard_normal(shots_per_eta) / math.sqrt(vs)
        p_v = rng.standard_normal(shots_per_eta)

        x_alice = keep_a * x_a - keep_s * x_s
        x_tx = keep_s * x_a + keep_a * x_s
        x_out = t * (x_tx + 2.0 * alpha * bits) + r * x_v
        x_eve_raw = r * (x_tx + 2.0 * alpha * bits) - t * x_v

        decided = np.where(x_out >= 0.0, 1.0, -1.0)
        bit_errors += int(np.count_nonzero(decided != bits))
        x_bob = x_out - signal * decided
        x_eve = x_eve_raw - 2.0 * alpha * r * bits

        p_alice = keep_a * p_a - keep_s * p_s
        p_tx = keep_s * p_a + keep_a * p_s
        p_bob = t * p_tx + r * p_v
        p_eve = r * p_tx - t * p_v

        sums += [
            np.sum(x_alice * x_alice),
            np.sum(x_bob * x_bob),
            np.sum(x_eve * x_eve),
            np.sum(x_alice * x_bob),
            np.sum(x_eve * x_bob),
            np.sum(p_alice * p_alice),
            np.sum(p_bob * p_bob),
            np.sum(p_eve * p_eve),
            np.sum(p_alice * p_bob),
            np.sum(p_eve * p_bob),
        ]

    n = shots_per_eta * len(etas)
    moments = sums / n
    return EmpiricalMoments(n, bit_errors, *moments)


def estimate_eta_from_carrier(received_carrier_power: float, carrier_amplitude: float) -> float:
    """Transmissivity estimate from the measured carrier power.

    The carrier is launched with amplitude beta_c, so the received
    power beta_c^2 * eta inverts directly.
    """
    if carrier_amplitude <= 0.0 or not math.isfinite(carrier_amplitude):
        raise UsageError(f"carrier amplitude must be positive, got {carrier_amplitude}")
    if received_carrier_power < 0.0 or not math.isfinite(received_carrier_power):
        raise UsageError(
            f"received carrier power must be nonnegative, got {received_carrier_power}"
        )
    eta_hat = received_carrier_power / carrier_amplitude**2
    if eta_hat > 1.0 + 1e-6:
        raise PhysicalityError(
            f"carrier power implies transmissivity {eta_hat} > 1; "
            "received power exceeds the launched carrier power"
        )
    return min(eta_hat, 1.0)


def linearized_direct_detection(carrier_amplitude: float, quadrature_noise: float) -> float:
    """Photocurrent of a bright carrier plus small quadrature noise.

    Detecting |beta_c + dX/2|^2 and dropping the quadratic noise term
    gives beta_c^2 + beta_c * dX.  The approximation needs the carrier
    to dominate the fluctuations; a warning flags marginal carriers.
    """
    if carrier_amplitude <= 0.0 or not math.isfinite(carrier_amplitude):
        raise UsageError(f"carrier amplitude must be positive, got {carrier_amplitude}")
    if carrier_amplitude < 10.0:
        warnings.warn(
            f"carrier amplitude {carrier_amplitude} < 10 shot-noise units; "
            "the dropped quadratic term is not negligible",
            LinearizationWarning,
            stacklevel=2,
        )
    return carrier_amplitude**2 + carrier_amplitude * quadrature_noise


def classical_snr(displacement: float, eta: float) -> float:
    """Signal-to-noise ratio of the binary classical stream at Bob.

    Symbol means sit at +-2*displacement*sqrt(eta) against unit vacuum
    noise (the zero-leakage condition pins Bob's q-variance at 1), so
    the SNR is 4 * eta * displacement^2.
    """
    if displacement < 0.0 or not math.isfinite(displacement):
        raise UsageError(f"displacement must be nonnegative, got {displacement}")
    _require_transmissivity(eta)
    return 4.0 * eta * displacement**2


def classical_ber(snr: float) -> float:
    """Bit error rate of threshold detection at the given SNR.

    Gaussian tail probability Q(sqrt(snr)).
    """
    if snr < 0.0 or not math.isfinite(snr):
        raise UsageError(f"SNR must be nonnegative and finite, got {snr}")
    return 0.5 * math.erfc(math.sqrt(snr) / math.sqrt(2.0))


def moments_to_csv(moments: EmpiricalMoments, path) -> None:
    """Write labeled second moments and bit-error counts as CSV."""
    rows = [
        ("n_shots", moments.n_shots),
        ("bit_errors", moments.bit_errors),
        ("bit_error_rate", moments.bit_error_rate),
        ("xa_xa", moments.xa_xa),
        ("xb_xb", moments.xb_xb),
        ("xe_xe", moments.xe_xe),
        ("xa_xb", moments.xa_xb),
        ("xe_xb", moments.xe_xb),
        ("pa_pa", moments.pa_pa),
        ("pb_pb", moments.pb_pb),
        ("pe_pe", moments.pe_pe),
        ("pa_pb", moments.pa_pb),
        ("pe_pb", moments.pe_pb),
    ]
    with open(path, "w", newline="\n") as handle:
        writer = csv.writer(handle)
        writer.writerow(("quantity", "value"))
        writer.writerows(rows)
