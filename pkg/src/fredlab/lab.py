"""Dense operator laboratory.

Operators are assembled as pairing matrices against a stream basis:
``B[i, j] = <v_{e_i}, v_{Op e_j}>``.  Because the basis is not exactly
orthogonal, every spectral quantity is computed relative to the Gram
matrix: symmetric eigenvalues via the generalized problem, singular
values through the Cholesky similarity ``L^{-1} B L^{-T}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import StreamBasis
from .errors import NumericsError

__all__ = [
    "OperatorMatrix",
    "assemble_operator",
    "matrix_rel_error",
    "invertibility_certificate",
    "decay_fit_alpha",
    "spectral_report",
    "compactness_signature",
    "compactness_tail",
    "conjugate_scan",
    "omega_hat_certificate",
    "CONJUGATE_THRESHOLD_FACTOR",
]

CONJUGATE_THRESHOLD_FACTOR = 1e-3


@dataclass
class OperatorMatrix:
    """Pairing matrix of an operator together with its basis Gram."""

    name: str
    pairing: np.ndarray
    gram: np.ndarray
    _chol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.pairing.shape[0]
        if self.pairing.shape != (n, n) or self.gram.shape != (n, n):
            raise ValueError("pairing and Gram matrices must be square and matched")
        if not (np.all(np.isfinite(self.pairing)) and np.all(np.isfinite(self.gram))):
            raise NumericsError(f"non-finite entries in assembled operator {self.name}")

    @property
    def n(self) -> int:
        return self.pairing.shape[0]

    def _cholesky(self) -> np.ndarray:
        if self._chol is None:
            try:
                self._chol = scipy.linalg.cholesky(self.gram, lower=True)
            except scipy.linalg.LinAlgError as exc:
                raise NumericsError(f"Gram matrix of {self.name} is not positive") from exc
        return self._chol

    def whitened(self) -> np.ndarray:
        """Coordinate matrix in a pairing-orthonormal frame:
        ``L^{-1} B L^{-T}`` with ``G = L L^T``."""
        L = self._cholesky()
        tmp = scipy.linalg.solve_triangular(L, self.pairing, lower=True)
        return scipy.linalg.solve_triangular(L, tmp.T, lower=True).T

    def symmetric_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the pairing-symmetrized operator, ascending."""
        W = self.whitened()
        return scipy.linalg.eigh(0.5 * (W + W.T), eigvals_only=True)

    def singular_values(self) -> np.ndarray:
        """Pairing-norm singular values, descending."""
        return scipy.linalg.svdvals(self.whitened())


def assemble_operator(name: str, basis: StreamBasis, apply_fn) -> OperatorMatrix:
    """Apply an operator to the whole basis stack and pair the images."""
    images = apply_fn(basis.fields)
    if images.shape != basis.fields.shape:
        raise NumericsError(
            f"operator {name} returned shape {images.shape}, "
            f"expected {basis.fields.shape}"
        )
    return OperatorMatrix(name=name, pairing=basis.pair_with(images), gram=basis.gram())


def matrix_rel_error(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius-relative distance between two matrices."""
    denom = np.linalg.norm(B)
    if denom == 0.0:
        return float(np.linalg.norm(A))
    return float(np.linalg.norm(A - B) / denom)


def invertibility_certificate(opm: OperatorMatrix, floor: float | None = None) -> dict:
    """Spectral summary used to certify invertibility on the basis span."""
    sig = opm.singular_values()
    eig = opm.symmetric_eigenvalues()
    out = {
        "name": opm.name,
        "n": opm.n,
        "sigma_min": float(sig[-1]),
        "sigma_max": float(sig[0]),
        "symmetric_lambda_min": float(eig[0]),
        "symmetric_lambda_max": float(eig[-1]),
    }
    if floor is not None:
        out["floor"] = float(floor)
        out["certified"] = bool(eig[0] >= floor)
    return out


def decay_fit_alpha(sigma: np.ndarray, drop_tol: float = 1e-12) -> float:
    """Least-squares exponent of an algebraic decay model ``sigma_j ~ j^(-alpha)``.

    Fitted on the descending spectrum over the indices whose values stay
    above ``drop_tol`` relative to the top (structural zeros are excluded).
    Positive alpha means a decaying spectrum.
    """
    sig = np.sort(np.asarray(sigma, dtype=np.float64))[::-1]
    if sig.size < 2 or sig[0] <= 0.0:
        raise NumericsError("need at least two positive singular values to fit decay")
    keep = sig > drop_tol * sig[0]
    sig = sig[keep]
    if sig.size < 2:
        return float("inf")
    j = np.arange(1, sig.size + 1, dtype=np.float64)
    slope = np.polyfit(np.log(j), np.log(sig), 1)[0]
    return float(-slope)


def spectral_report(opm: OperatorMatrix) -> dict:
    """Full spectral summary of one assembled operator.

    The decay exponent is vacuous (``None``) for a zero matrix.
    """
    sig = opm.singular_values()
    eig = opm.symmetric_eigenvalues()
    return {
        "name": opm.name,
        "n": opm.n,
        "singular_values": sig,
        "sigma_min": float(sig[-1]),
        "sigma_max": float(sig[0]),
        "symmetric_lambda_min": float(eig[0]),
        "decay_fit_alpha": decay_fit_alpha(sig) if sig[0] > 0.0 else None,
    }


def compactness_signature(
    opm: OperatorMatrix,
    tail_fraction: float = 1.0 / 3.0,
    tail_tol: float = 1e-3,
) -> dict:
    """Spectral report plus the tail-decay verdict.

    A compact operator's compression shows a spectrum decaying toward
    zero (``tail_decays`` when the trailing third sits below ``tail_tol``
    relative to the top); an operator bounded below shows a flat floor.
    """
    report = spectral_report(opm)
    tail = compactness_tail(report["singular_values"], tail_fraction)
    report.update(tail)
    report["tail_tol"] = float(tail_tol)
    report["tail_decays"] = bool(tail["tail_max_ratio"] < tail_tol)
    return report


def compactness_tail(sigma: np.ndarray, tail_fraction: float = 1.0 / 3.0) -> dict:
    """Decay summary of a singular value sequence.

    Reports the worst ratio ``sigma_k / sigma_1`` over the trailing
    ``tail_fraction`` of the spectrum (sorted descending).
    """
    sig = np.sort(np.asarray(sigma))[::-1]
    n = sig.size
    start = n - max(1, int(np.ceil(n * tail_fraction)))
    if sig[0] <= 0.0:
        # the zero operator: trivially compact, every ratio vanishes
        ratios = np.zeros(n - start)
        full_min = 0.0
    else:
        ratios = sig[start:] / sig[0]
        full_min = float(sig[-1] / sig[0])
    return {
        "sigma_1": float(sig[0]),
        "tail_start": int(start),
        "tail_max_ratio": float(ratios.max()),
        "tail_min_ratio": float(ratios.min()),
        "full_min_ratio": full_min,
    }


def conjugate_scan(
    ctxs,
    times: np.ndarray,
    basis: StreamBasis,
) -> list[dict]:
    """Track the smallest singular value of the Jacobi-field operator
    along a trajectory; a vanishing value flags a conjugate point."""
    from .operators import phi_scan

    streams = phi_scan(ctxs, times, basis.fields)
    rows = []
    for t, stack in zip(times, streams):
        if t == times[0]:
            continue
        opm = OperatorMatrix(
            name=f"jacobi@{t:.6g}", pairing=basis.pair_with(stack), gram=basis.gram()
        )
        sig = opm.singular_values()
        threshold = CONJUGATE_THRESHOLD_FACTOR * float(np.median(sig))
        multiplicity = int(np.count_nonzero(sig < threshold))
        rows.append(
            {
                "t": float(t),
                "sigma_min": float(sig[-1]),
                "sigma_max": float(sig[0]),
                "sigma_min_over_t": float(sig[-1] / t),
                "threshold": threshold,
                "multiplicity": multiplicity,
                "candidate": bool(multiplicity > 0),
            }
        )
    return rows


def omega_hat_certificate(
    ctxs,
    times: np.ndarray,
    basis: StreamBasis,
    enlarged_basis: StreamBasis | None = None,
    stability_tol: float = 0.05,
) -> dict:
    """Assemble the accumulated inverse operator and certify invertibility.

    Certifies the symmetrized spectral floor against the trajectory
    quadrature of the inverse squared sup-norms of the differentials,
    and (optionally) the stability of the smallest singular value when
    the basis family is enlarged — the discrete closed-range signature.
    """
    from .operators import (
        LambdaInverse,
        omega_hat_apply,
        omega_lower_constant,
        uniform_quad_weights,
    )

    times = np.asarray(times, dtype=np.float64)
    quad_w = uniform_quad_weights(times.size, float(times[1] - times[0]))
    invs = [LambdaInverse(ctx.metric) for ctx in ctxs]
    t = float(times[-1])
    floor = omega_lower_constant(ctxs, quad_w)
    opm = assemble_operator(
        f"omega-hat@{t:.6g}", basis, lambda F: omega_hat_apply(invs, quad_w, F)
    )
    out = invertibility_certificate(opm, floor=0.9 * floor)
    out["t"] = t
    out["floor_quadrature"] = float(floor)
    if enlarged_basis is not None:
        big = assemble_operator(
            f"omega-hat-enlarged@{t:.6g}",
            enlarged_basis,
            lambda F: omega_hat_apply(invs, quad_w, F),
        )
        sig_big = big.singular_values()
        rel = abs(float(sig_big[-1]) - out["sigma_min"]) / out["sigma_min"]
        out["n_enlarged"] = big.n
        out["sigma_min_enlarged"] = float(sig_big[-1])
        out["enlargement_rel_change"] = rel
        out["enlargement_stable"] = bool(rel < stability_tol)
    return out
