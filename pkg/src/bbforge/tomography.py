"""Simulated quantum process tomography and short-time generator extraction.

The channel is probed on the matrix-unit input set (each off-diagonal unit
realized through the four standard pure-state preparations), the response
matrix ``lambda`` is inverted against the fixed-basis conjugation tensor
``xi`` to obtain the process matrix ``chi``, and the Hamiltonian-like part
of the short-time expansion is read off the first column:
``xi_a = Im(chi_a0) / t`` in rate units.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .defaults import TOL
from .errors import DegenerateTimeError, DomainError, InconsistencyError, ShapeError
from .open_system_sim import _matrix_to_pairs, _pairs_to_matrix, _readonly
from .operator_algebra import CoordinateVector, OperatorBasis, build_pauli_basis

__all__ = [
    "TomographyData",
    "ChiMatrix",
    "EffectiveGenerator",
    "run_qpt",
    "chi_from_lambda",
    "extract_generator",
    "channel_from_kraus",
]


@dataclass(frozen=True)
class TomographyData:
    """Raw process tomography output before inversion.

    ``lam[j, k]`` are the coefficients of the channel response to matrix
    unit ``j`` expanded over matrix units ``k``; ``xi_tensor[j, k, a, b]``
    encodes ``K_a E_j K_b = sum_k xi E_k`` and depends on the fixed basis
    only.
    """

    lam: np.ndarray
    xi_tensor: np.ndarray
    basis: OperatorBasis
    time_tag: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "lam", _readonly(np.asarray(self.lam, dtype=complex)))
        object.__setattr__(self, "xi_tensor", _readonly(np.asarray(self.xi_tensor, dtype=complex)))
        d2 = self.basis.dim**2
        nb = self.basis.size
        if self.lam.shape != (d2, d2):
            raise ShapeError("lambda matrix has wrong shape")
        if self.xi_tensor.shape != (d2, d2, nb, nb):
            raise ShapeError("xi tensor has wrong shape")


@dataclass(frozen=True)
class ChiMatrix:
    """Process matrix in the fixed Hermitian basis, ``rho -> sum chi_ab K_a rho K_b``."""

    entries: np.ndarray
    time_tag: float | None
    basis: OperatorBasis
    skew_norm: float = 0.0
    residual: float = 0.0

    def __post_init__(self):
        e = _readonly(np.asarray(self.entries, dtype=complex))
        object.__setattr__(self, "entries", e)
        nb = self.basis.size
        if e.shape != (nb, nb):
            raise ShapeError("chi matrix shape does not match the basis")
        if np.linalg.norm(e - e.conj().T) > TOL.hermiticity:
            raise DomainError("chi matrix must be Hermitian within tolerance")

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Channel action reconstructed from the process matrix."""
        k = self.basis.elements
        return np.einsum("ab,aij,jk,bkl->il", self.entries, k, np.asarray(rho, dtype=complex), k)

    def to_dict(self) -> dict:
        return {
            "basis": list(self.basis.labels),
            "time_tag": self.time_tag,
            "entries": _matrix_to_pairs(self.entries),
            "skew_norm": self.skew_norm,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChiMatrix":
        labels = data["basis"]
        num_qubits = len(labels[0])
        basis = build_pauli_basis(num_qubits)
        if tuple(labels) != basis.labels:
            raise DomainError("chi file does not use the lexicographic Pauli basis")
        return cls(
            entries=_pairs_to_matrix(data["entries"]),
            time_tag=data.get("time_tag"),
            basis=basis,
            skew_norm=float(data.get("skew_norm", 0.0)),
            residual=float(data.get("residual", 0.0)),
        )


@dataclass(frozen=True)
class EffectiveGenerator:
    """Short-time generator coordinates extracted from chi, in rate units.

    ``xi[i]`` is the weight-1 coordinate vector of qubit ``i``; for qubit
    pairs, ``pair_matrix(i, j)`` is the 4x4 coefficient matrix whose row 0 /
    column 0 carry the single-qubit parts and whose (1:, 1:) block carries
    the bilinear terms.
    """

    xi: tuple[np.ndarray, ...]
    xi_pair: dict
    time_scale: float
    basis: OperatorBasis

    def __post_init__(self):
        object.__setattr__(self, "xi", tuple(_readonly(v) for v in self.xi))
        object.__setattr__(self, "xi_pair", dict(self.xi_pair))

    @property
    def num_qubits(self) -> int:
        return len(self.xi)

    def pair_matrix(self, i: int, j: int) -> np.ndarray:
        return self.xi_pair[(i, j)]

    def qubit_vector(self, i: int) -> CoordinateVector:
        return CoordinateVector(coords=self.xi[i], basis=build_pauli_basis(1))


def _matrix_unit_inputs(dim: int):
    """Channel inputs for every matrix unit, via physical preparations.

    Returns the list of pure states to feed the channel and, per matrix
    unit ``|m><n|``, the complex combination over those states that
    reconstructs the channel response by linearity.
    """
    states = []
    index = {}
    for m in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[m] = 1.0
        index[("d", m)] = len(states)
        states.append(np.outer(e, e.conj()))
    for m in range(dim):
        for n in range(m + 1, dim):
            plus = np.zeros(dim, dtype=complex)
            plus[m] = plus[n] = 1.0 / np.sqrt(2.0)
            plus_i = np.zeros(dim, dtype=complex)
            plus_i[m] = 1.0 / np.sqrt(2.0)
            plus_i[n] = 1.0j / np.sqrt(2.0)
            index[("p", m, n)] = len(states)
            states.append(np.outer(plus, plus.conj()))
            index[("q", m, n)] = len(states)
            states.append(np.outer(plus_i, plus_i.conj()))

    combos = {}
    for m in range(dim):
        for n in range(dim):
            if m == n:
                combos[(m, n)] = [(index[("d", m)], 1.0)]
            else:
                a, b = min(m, n), max(m, n)
                sign = 1.0j if m < n else -1.0j
                corr = (1.0 + 1.0j) / 2.0 if m < n else (1.0 - 1.0j) / 2.0
                combos[(m, n)] = [
                    (index[("p", a, b)], 1.0),
                    (index[("q", a, b)], sign),
                    (index[("d", m)], -corr),
                    (index[("d", n)], -corr),
                ]
    return states, combos


def _check_linear(channel, dim: int):
    rho_a = np.zeros((dim, dim), dtype=complex)
    rho_a[0, 0] = 1.0
    rho_b = np.eye(dim, dtype=complex) / dim
    mix = 0.37 * rho_a + 0.63 * rho_b
    direct = channel(mix)
    combined = 0.37 * channel(rho_a) + 0.63 * channel(rho_b)
    if np.linalg.norm(direct - combined) > 1e-8:
        raise DomainError("channel failed the superposition test; tomography needs a linear map")


def _xi_tensor(basis: OperatorBasis) -> np.ndarray:
    """xi[j, k, a, b] with j=(m,n), k=(p,q): (K_a E_mn K_b)[p,q] = K_a[p,m] K_b*[q,n]."""
    k = basis.elements
    d = basis.dim
    nb = basis.size
    xi = np.einsum("apm,bqn->mnpqab", k, k.conj())
    return xi.reshape(d * d, d * d, nb, nb).transpose(0, 1, 2, 3)


def run_qpt(channel, basis: OperatorBasis, *, time_tag: float | None = None) -> TomographyData:
    """Probe a channel on a spanning input set.

    Parameters
    ----------
    channel : callable
        Linear map acting on ``dim x dim`` density matrices.  It is only
        ever called on genuine states; matrix-unit responses are assembled
        from the four standard preparations per index pair.
    basis : OperatorBasis
        Fixed Hermitian basis that the downstream chi matrix refers to.
    time_tag : float, optional
        Evolution time the channel corresponds to; carried through to the
        chi matrix so generator extraction can report rates.
    """
    d = basis.dim
    _check_linear(channel, d)
    states, combos = _matrix_unit_inputs(d)
    responses = [np.asarray(channel(s), dtype=complex) for s in states]
    for r in responses:
        if r.shape != (d, d):
            raise ShapeError("channel output dimension does not match its input")
    lam = np.zeros((d * d, d * d), dtype=complex)
    for (m, n), parts in combos.items():
        out = np.zeros((d, d), dtype=complex)
        for idx, coeff in parts:
            out += coeff * responses[idx]
        # expansion over matrix units is just the entries themselves
        lam[m * d + n, :] = out.reshape(-1)
    return TomographyData(lam=lam, xi_tensor=_xi_tensor(basis), basis=basis, time_tag=time_tag)


def chi_from_lambda(data: TomographyData) -> ChiMatrix:
    """Solve ``sum_ab xi_jk^ab chi_ab = lambda_jk`` for the process matrix.

    The system is solved by least squares with a relative singular-value
    cutoff; the Hermitian part of the solution is returned and the
    skew-Hermitian remainder reported.

    Raises
    ------
    InconsistencyError
        If the residual exceeds 1e-6, i.e. the measured map is not
        expressible over the fixed basis.
    """
    nb = data.basis.size
    a = data.xi_tensor.reshape(-1, nb * nb)
    b = data.lam.reshape(-1)
    chi_vec, *_ = np.linalg.lstsq(a, b, rcond=TOL.pinv_rcond)
    residual = float(np.linalg.norm(a @ chi_vec - b))
    if residual > 1e-6:
        raise InconsistencyError(
            f"tomography inversion residual {residual:.2e}; channel incompatible with the basis"
        )
    chi = chi_vec.reshape(nb, nb)
    skew = float(np.linalg.norm(chi - chi.conj().T) / 2.0)
    chi = (chi + chi.conj().T) / 2.0
    return ChiMatrix(
        entries=chi,
        time_tag=data.time_tag,
        basis=data.basis,
        skew_norm=skew,
        residual=residual,
    )


def _weight1_index(qubit: int, alpha: int, num_qubits: int) -> int:
    """Lexicographic index of the Pauli string with ``alpha`` on ``qubit``."""
    return alpha * 4 ** (num_qubits - 1 - qubit)


def extract_generator(chi: ChiMatrix, *, num_qubits: int | None = None, pairs=None) -> EffectiveGenerator:
    """Read the short-time generator coordinates off the chi matrix.

    Single-qubit coordinates are ``Im(chi_{a,0}) / t`` over the weight-1
    strings; pair matrices combine the weight-2 entries with the weight-1
    margins.  A warning is emitted when ``t * |generator|`` is large enough
    that the first-order reading is questionable.

    Raises
    ------
    DegenerateTimeError
        If the chi matrix carries no positive probe time.
    """
    if chi.time_tag is None or chi.time_tag <= 0:
        raise DegenerateTimeError("generator extraction requires chi sampled at a time t > 0")
    t = float(chi.time_tag)
    if num_qubits is None:
        num_qubits = chi.basis.num_qubits
    col0 = chi.entries[:, 0]
    xi_by_qubit = []
    for i in range(num_qubits):
        vec = np.array(
            [col0[_weight1_index(i, a, num_qubits)].imag for a in (1, 2, 3)]
        ) / t
        xi_by_qubit.append(vec)
    if pairs is None:
        pairs = [(i, j) for i in range(num_qubits) for j in range(i + 1, num_qubits)]
    xi_pair = {}
    for (i, j) in pairs:
        m = np.zeros((4, 4))
        for a in range(4):
            for b in range(4):
                if a == 0 and b == 0:
                    continue
                idx = a * 4 ** (num_qubits - 1 - i) + b * 4 ** (num_qubits - 1 - j)
                m[a, b] = col0[idx].imag / t
        m.setflags(write=False)
        xi_pair[(i, j)] = m
    scale = max((np.linalg.norm(v) for v in xi_by_qubit), default=0.0)
    for m in xi_pair.values():
        scale = max(scale, np.linalg.norm(m))
    if t * scale > 0.1:
        warnings.warn(
            f"probe time {t} is large for generator scale {scale:.3g}; "
            "first-order extraction may be inaccurate",
            stacklevel=2,
        )
    return EffectiveGenerator(xi=tuple(xi_by_qubit), xi_pair=xi_pair, time_scale=t, basis=chi.basis)


def channel_from_kraus(operators) -> callable:
    """Wrap a Kraus operator list as a channel function."""
    ops = [np.asarray(a, dtype=complex) for a in operators]

    def channel(rho):
        rho = np.asarray(rho, dtype=complex)
        out = np.zeros_like(rho)
        for a in ops:
            out += a @ rho @ a.conj().T
        return out

    return channel
