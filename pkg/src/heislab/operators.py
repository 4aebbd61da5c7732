"""Dense operator algebra for small spin-1/2 systems.

Conventions used throughout the package:

* Single-site basis is {|e>, |g>} with the excited state |e> at index 0,
  so sigma^z |e> = +|e>.  Spontaneous decay is generated by
  sigma^- = |g><e| (excited -> ground).
* Operators are plain complex numpy arrays of shape (dim, dim) with
  dim = 2**n_sites.  Site 0 is the leftmost tensor factor.
* Vectorisation is column-stacking: vec(rho)[i + dim*j] = rho[i, j],
  hence vec(A rho B) = kron(B.T, A) vec(rho).  `cmop` and `oracle` rely
  on this choice; do not mix conventions.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm

__all__ = [
    "pauli",
    "embed",
    "lindblad_apply",
    "dense_liouvillian",
    "expectation",
    "vec",
    "unvec",
    "bloch_vector",
    "bloch_state",
    "LocalPropagator",
    "propagate_local",
    "DENSE_DIM_CAP",
]

# dense superoperators limited to dim**2 <= 4096 entries per axis
DENSE_DIM_CAP = 64

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
    "plus": np.array([[0, 1], [0, 0]], dtype=complex),
    "minus": np.array([[0, 0], [1, 0]], dtype=complex),
}
for _m in _PAULI.values():
    _m.setflags(write=False)

AXES = ("x", "y", "z")


def pauli(axis: str) -> np.ndarray:
    """Return the 2x2 Pauli or ladder operator for `axis`.

    `axis` is one of "x", "y", "z", "plus", "minus".  The returned array
    is a shared read-only view; copy before mutating.
    """
    try:
        return _PAULI[axis]
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def embed(op: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Embed a single-site operator into an n-site tensor product space.

    Site 0 is the leftmost factor: embed(A, 0, 2) == kron(A, I).
    """
    if not 0 <= site < n_sites:
        raise ValueError(f"site {site} out of range for {n_sites} sites")
    left = np.eye(2**site, dtype=complex)
    right = np.eye(2 ** (n_sites - site - 1), dtype=complex)
    return np.kron(np.kron(left, op), right)


def _check_square(a: np.ndarray, name: str = "operator") -> int:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    return a.shape[0]


def lindblad_apply(H, jumps, rho):
    """Right-hand side of the Lindblad master equation, term by term.

    Returns -i[H, rho] + sum_k (rate_k/2) (2 L rho L+ - {L+L, rho}) for
    `jumps` a list of (L, rate) pairs.  No superoperator matrix is formed,
    so this scales to any dim for which dense matrix products are viable.
    """
    dim = _check_square(rho, "rho")
    out = np.zeros_like(rho, dtype=complex)
    if H is not None:
        if _check_square(H, "H") != dim:
            raise ValueError("H and rho dimensions differ")
        out += -1j * (H @ rho - rho @ H)
    for L, rate in jumps:
        if _check_square(L, "jump operator") != dim:
            raise ValueError("jump operator and rho dimensions differ")
        Ld = L.conj().T
        LdL = Ld @ L
        out += (rate / 2.0) * (2.0 * (L @ rho @ Ld) - LdL @ rho - rho @ LdL)
    return out


def dense_liouvillian(H, jumps, dim_cap: int = DENSE_DIM_CAP) -> np.ndarray:
    """Vectorised Liouvillian matrix in the column-stacking convention.

    Satisfies dense_liouvillian(H, jumps) @ vec(rho) == vec(lindblad_apply)
    for every rho.  Intended for the exact small-lattice oracle and the
    4x4 local propagator; refuses dim > `dim_cap`.
    """
    if H is not None:
        dim = _check_square(H, "H")
    elif jumps:
        dim = _check_square(jumps[0][0], "jump operator")
    else:
        raise ValueError("need at least one of H or jumps")
    if dim > dim_cap:
        raise ValueError(f"dim {dim} exceeds dense superoperator cap {dim_cap}")
    eye = np.eye(dim, dtype=complex)
    L_super = np.zeros((dim * dim, dim * dim), dtype=complex)
    if H is not None:
        L_super += -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for L, rate in jumps:
        if _check_square(L, "jump operator") != dim:
            raise ValueError("jump operator dimension mismatch")
        LdL = L.conj().T @ L
        L_super += (rate / 2.0) * (
            2.0 * np.kron(L.conj(), L) - np.kron(eye, LdL) - np.kron(LdL.T, eye)
        )
    return L_super


def expectation(op: np.ndarray, rho: np.ndarray) -> complex:
    """Tr{op rho}.  Imaginary part is numerical noise for Hermitian op
    and physical rho."""
    if op.shape != rho.shape:
        raise ValueError(f"dimension mismatch: {op.shape} vs {rho.shape}")
    return complex(np.trace(op @ rho))


def vec(a: np.ndarray) -> np.ndarray:
    """Column-stacking vectorisation."""
    return np.asarray(a).reshape(-1, order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape((d, d), order="F")


def bloch_vector(rho: np.ndarray) -> np.ndarray:
    """Real Bloch vector (x, y, z) of a single-site state."""
    return np.array([expectation(_PAULI[a], rho).real for a in AXES])


def bloch_state(n) -> np.ndarray:
    """Single-site density matrix (I + n.sigma)/2 for a Bloch vector n."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise ValueError("Bloch vector must have 3 components")
    if np.linalg.norm(n) > 1.0 + 1e-12:
        raise ValueError(f"Bloch vector norm {np.linalg.norm(n):.6f} exceeds 1")
    rho = 0.5 * np.eye(2, dtype=complex)
    for i, a in enumerate(AXES):
        rho += 0.5 * n[i] * _PAULI[a]
    return rho


class LocalPropagator:
    """Exponential of the single-site driven-dissipative Liouvillian.

    Holds the eigendecomposition of the 4x4 vectorised generator
    L = -i(Omega/2)[sigma^x, .] + (gamma/2)(2 s- . s+ - {s+s-, .})
    so that exp(L tau) X is evaluated in closed form for arbitrary
    delays.  If the eigenvector matrix is ill-conditioned the class falls
    back to scaling-and-squaring matrix exponentials per requested delay.

    `exp_table(spacing, count)` tabulates exp(eigvals * k * spacing) on a
    uniform delay grid; the memory-kernel evolution uses it so that no
    kernel evaluation ever interpolates in tau.
    """

    COND_THRESHOLD = 1e8

    def __init__(self, omega: float, gamma: float):
        self.omega = float(omega)
        self.gamma = float(gamma)
        H = 0.5 * omega * _PAULI["x"]
        self.generator = dense_liouvillian(H, [(_PAULI["minus"], gamma)])
        w, V = np.linalg.eig(self.generator)
        cond = np.linalg.cond(V)
        self.diagonalizable = bool(np.isfinite(cond) and cond < self.COND_THRESHOLD)
        if self.diagonalizable:
            self.eigvals = w
            self.modes = V
            self.modes_inv = np.linalg.inv(V)
        else:
            self.eigvals = self.modes = self.modes_inv = None

    def matrix(self, tau: float) -> np.ndarray:
        """4x4 matrix of exp(L tau) in the column-stacking basis."""
        if tau < 0:
            raise ValueError(f"negative delay tau={tau}")
        if self.diagonalizable:
            return (self.modes * np.exp(self.eigvals * tau)) @ self.modes_inv
        return expm(self.generator * tau)

    def apply(self, tau: float, X: np.ndarray) -> np.ndarray:
        """Propagate a 2x2 operator: exp(L tau) X.

        X need not be a density matrix; the same map carries the
        fluctuation-operator products of the memory kernels.
        """
        if X.shape != (2, 2):
            raise ValueError("local propagator acts on 2x2 operators")
        return unvec(self.matrix(tau) @ vec(X))

    def exp_table(self, spacing: float, count: int) -> np.ndarray:
        """exp(eigvals * k * spacing) for k = 0..count, shape (count+1, 4)."""
        if not self.diagonalizable:
            raise RuntimeError(
                "propagator is not diagonalizable; use matrix_table instead"
            )
        k = np.arange(count + 1)[:, None]
        return np.exp(self.eigvals[None, :] * (k * spacing))

    def matrix_table(self, spacing: float, count: int) -> np.ndarray:
        """Stack of 4x4 propagators at delays k * spacing, k = 0..count."""
        out = np.empty((count + 1, 4, 4), dtype=complex)
        out[0] = np.eye(4)
        if self.diagonalizable:
            table = self.exp_table(spacing, count)
            for k in range(1, count + 1):
                out[k] = (self.modes * table[k]) @ self.modes_inv
        else:
            step = expm(self.generator * spacing)
            for k in range(1, count + 1):
                out[k] = step @ out[k - 1]
        return out


def propagate_local(prop: LocalPropagator, tau: float, X: np.ndarray) -> np.ndarray:
    """exp(L_local tau) X via the cached eigendecomposition."""
    return prop.apply(tau, X)
