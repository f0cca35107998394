"""
Master equation of N van der Pol oscillators in a truncated Fock space.

    d rho / dt = -i[H, rho] + sum_n (k1 D[a_n^+] + k2 D[a_n^2]) + sum_{m<n} (mu_mn / N) D[a_m - a_n]

with D[o] rho = 2 o rho o^+ - (o^+ o rho + rho o^+ o). The leading 2 is kept, so every
rate here is half the rate of the more common Lindblad convention.

Density matrices are vectorized by stacking columns: vec(A rho B) = (B^T kron A) vec(rho).
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import linalg, sparse
from scipy.integrate import solve_ivp
from scipy.sparse import linalg as sparse_linalg

from .exceptions import (
    ConfigurationError,
    DegenerateSteadyStateError,
    EigensolverError,
    SizingError,
    StepControlError,
)
from .model import CouplingSpec, coupling_matrix, normalization

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4096
DEFAULT_MEMORY_BUDGET = 2048 * 2**20
ZERO_TOLERANCE = 1e-9
RESIDUAL_TOLERANCE = 1e-8
PAIRING_TOLERANCE = 1e-8
DEFAULT_EIGENVALUES = 20
DIRECT_SOLVE_LIMIT = 20000
STEADY_STATE_EIGENVALUES = 4
STEADY_STATE_KRYLOV = 40

CUTOFF_STEP = 4
TERMINAL_POPULATION_LIMIT = 1e-6
DRIFT_LIMIT = 1e-8
MIN_CUTOFF = 3
GAP_TOLERANCE = 1e-2
GAP_CHECK_EIGENVALUES = 6

BASIS = 'column-stacking'


@dataclass(frozen=True)
class SizingReport:
    cutoff: int
    n_modes: int
    hilbert_dim: int
    liouville_dim: int
    dense_bytes: int
    sparse_bytes: int
    path: str
    required_bytes: int
    budget_bytes: int

    @property
    def fits(self):
        return self.required_bytes <= self.budget_bytes

    def to_dict(self):
        return {
            'cutoff': self.cutoff,
            'n_modes': self.n_modes,
            'hilbert_dim': self.hilbert_dim,
            'liouville_dim': self.liouville_dim,
            'dense_bytes': self.dense_bytes,
            'sparse_bytes': self.sparse_bytes,
            'path': self.path,
            'required_bytes': self.required_bytes,
            'budget_bytes': self.budget_bytes,
            'fits': self.fits,
        }


@dataclass(frozen=True)
class FockConfig:
    cutoff: int
    n_modes: int = 1
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    dense_limit: int = DENSE_LIMIT

    def __post_init__(self):
        if int(self.cutoff) != self.cutoff or self.cutoff < 2:
            raise ConfigurationError(f"Fock cutoff must be an integer >= 2, got {self.cutoff}")
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ConfigurationError(f"n_modes must be an integer >= 1, got {self.n_modes}")
        if self.memory_budget <= 0:
            raise ConfigurationError("memory budget must be positive")

    @property
    def hilbert_dim(self):
        return self.cutoff ** self.n_modes

    @property
    def liouville_dim(self):
        return self.hilbert_dim ** 2

    def sizing(self):
        """Memory estimate for assembling and diagonalizing the Liouvillian"""
        D, L = self.hilbert_dim, self.liouville_dim
        pairs = self.n_modes * (self.n_modes - 1) // 2
        # nonzeros per superoperator row: Hamiltonian, local and pair dissipators
        per_row = 3 + 6 * self.n_modes + 8 * pairs
        sparse_bytes = L * per_row * 20 + (L + 1) * 8
        dense_bytes = L * L * 16
        if L <= self.dense_limit:
            path = 'dense'
            # matrix, eigenvectors and LAPACK workspace
            required = 3 * dense_bytes + sparse_bytes
        else:
            path = 'sparse'
            # factorization fill-in and Krylov basis
            required = 4 * sparse_bytes + 64 * L * 16
        return SizingReport(
            cutoff=self.cutoff,
            n_modes=self.n_modes,
            hilbert_dim=D,
            liouville_dim=L,
            dense_bytes=dense_bytes,
            sparse_bytes=sparse_bytes,
            path=path,
            required_bytes=required,
            budget_bytes=int(self.memory_budget),
        )

    def check(self):
        report = self.sizing()
        logger.info(
            "Fock space d=%d N=%d: Hilbert %d, Liouville %d, %s path, %.1f MiB of %.1f MiB",
            self.cutoff, self.n_modes, report.hilbert_dim, report.liouville_dim,
            report.path, report.required_bytes / 2**20, report.budget_bytes / 2**20,
        )
        if not report.fits:
            raise SizingError(
                report.hilbert_dim, report.liouville_dim, report.required_bytes, report.budget_bytes
            )
        return report


def annihilation(d):
    """Truncated bosonic lowering operator: sqrt(k) at (k-1, k)"""
    if int(d) != d or d < 2:
        raise ConfigurationError(f"Fock dimension must be >= 2, got {d}")
    return sparse.diags(np.sqrt(np.arange(1, d, dtype=float)), offsets=1, format='csr', dtype=complex)


def embed(op, site, n_modes, d):
    """Kronecker embedding of a single-mode operator acting on 1-based ``site``"""
    if not 1 <= site <= n_modes:
        raise ConfigurationError(f"site {site} outside 1..{n_modes}")
    left = sparse.identity(d ** (site - 1), dtype=complex, format='csr')
    right = sparse.identity(d ** (n_modes - site), dtype=complex, format='csr')
    return sparse.kron(sparse.kron(left, op), right, format='csr')


def mode_operators(fock):
    a = annihilation(fock.cutoff)
    return [embed(a, site, fock.n_modes, fock.cutoff) for site in range(1, fock.n_modes + 1)]


def build_hamiltonian(params, fock):
    """H = sum_n (w a_n^+ a_n + W a_n + W* a_n^+)"""
    fock.check()
    hamiltonian = sparse.csr_matrix((fock.hilbert_dim, fock.hilbert_dim), dtype=complex)
    for a in mode_operators(fock):
        adag = a.conj().T
        hamiltonian = hamiltonian + params.omega * (adag @ a)
        if params.drive:
            hamiltonian = hamiltonian + params.drive * a + np.conj(params.drive) * adag
    return hamiltonian.tocsr()


def dissipator(o):
    """Superoperator of D[o] rho = 2 o rho o^+ - o^+ o rho - rho o^+ o"""
    o = sparse.csr_matrix(o, dtype=complex)
    if o.shape[0] != o.shape[1]:
        raise ConfigurationError(f"jump operator must be square, got {o.shape}")
    identity = sparse.identity(o.shape[0], dtype=complex, format='csr')
    number = (o.conj().T @ o).tocsr()
    return (
        2.0 * sparse.kron(o.conj(), o)
        - sparse.kron(identity, number)
        - sparse.kron(number.T, identity)
    ).tocsr()


def commutator_superoperator(hamiltonian):
    """Superoperator of rho -> -i [H, rho]"""
    hamiltonian = sparse.csr_matrix(hamiltonian, dtype=complex)
    identity = sparse.identity(hamiltonian.shape[0], dtype=complex, format='csr')
    return (-1j * (sparse.kron(identity, hamiltonian) - sparse.kron(hamiltonian.T, identity))).tocsr()


def vectorize(rho):
    return np.asarray(rho).reshape(-1, order='F')


def unvectorize(vector, dim):
    return np.asarray(vector).reshape((dim, dim), order='F')


@dataclass(frozen=True)
class Liouvillian:
    matrix: sparse.csr_matrix
    fock: FockConfig
    basis: str = BASIS

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def hilbert_dim(self):
        return self.fock.hilbert_dim

    def apply(self, rho):
        return unvectorize(self.matrix @ vectorize(rho), self.hilbert_dim)

    def norm(self):
        return float(sparse_linalg.norm(self.matrix, 1))

    def adjoint_identity_residual(self):
        """||L^+ vec(1)|| / ||L||; zero for a trace-preserving generator"""
        identity = vectorize(np.eye(self.hilbert_dim, dtype=complex))
        return float(np.linalg.norm(self.matrix.conj().T @ identity)) / max(self.norm(), 1.0)


def build_liouvillian(params, coupling, fock):
    fock.check()
    hamiltonian = build_hamiltonian(params, fock)
    matrix = commutator_superoperator(hamiltonian)
    modes = mode_operators(fock)
    for a in modes:
        if params.kappa1:
            matrix = matrix + params.kappa1 * dissipator(a.conj().T)
        if params.kappa2:
            matrix = matrix + params.kappa2 * dissipator(a @ a)

    N = fock.n_modes
    if N > 1:
        rates = coupling_matrix(coupling, N) / normalization(coupling, N)
        for m in range(N):
            for n in range(m + 1, N):
                if rates[m, n] > 0:
                    matrix = matrix + rates[m, n] * dissipator(modes[m] - modes[n])
    return Liouvillian(matrix=matrix.tocsr(), fock=fock)


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    method: str
    zero_tolerance: float = ZERO_TOLERANCE

    @property
    def zero_modes(self):
        return int(np.sum(np.abs(self.eigenvalues) < self.zero_tolerance))

    @property
    def gap(self):
        """Smallest decay rate |Re lambda| among the nonzero eigenvalues"""
        nonzero = self.eigenvalues[np.abs(self.eigenvalues) >= self.zero_tolerance]
        if nonzero.size == 0:
            return math.nan
        return float(np.min(np.abs(nonzero.real)))


def _order(values):
    return np.lexsort((values.imag, -values.real))


def _drop_orphans(values, keep):
    """Trim the tail of ``values[:keep]`` until no complex eigenvalue lacks its conjugate"""
    while keep > 0:
        last = values[keep - 1]
        scale = PAIRING_TOLERANCE * max(1.0, abs(last))
        if abs(last.imag) <= scale:
            break
        partners = np.abs(values[:keep - 1] - np.conj(last)) <= scale
        if partners.any():
            break
        keep -= 1
    return keep


def _residuals(matrix, values, vectors):
    norms = np.linalg.norm(vectors, axis=0)
    return np.linalg.norm(matrix @ vectors - vectors * values, axis=0) / np.where(norms > 0, norms, 1.0)


def spectrum(liouvillian, k=None):
    """Eigenvalues sorted by descending real part

    Dense diagonalization up to the dense limit, Arnoldi iteration for the
    eigenvalues of largest real part above it. Conjugate pairs are never split.
    """
    matrix = liouvillian.matrix
    dim = liouvillian.dim
    scale = max(liouvillian.norm(), 1.0)
    if dim <= liouvillian.fock.dense_limit:
        dense = matrix.toarray()
        values, vectors = linalg.eig(dense)
        residuals = _residuals(dense, values, vectors)
        method = 'dense'
    else:
        wanted = k or DEFAULT_EIGENVALUES
        if wanted >= dim - 1:
            raise EigensolverError(f"requested {wanted} eigenvalues of a {dim}-dimensional operator")
        try:
            values, vectors = sparse_linalg.eigs(
                matrix, k=min(wanted + 1, dim - 2), which='LR', tol=RESIDUAL_TOLERANCE / 10,
            )
        except sparse_linalg.ArpackNoConvergence as error:
            residuals = _residuals(matrix, error.eigenvalues, error.eigenvectors)
            raise EigensolverError(
                f"Arnoldi iteration converged for {len(error.eigenvalues)} of {wanted} eigenvalues",
                residuals,
            ) from error
        residuals = _residuals(matrix, values, vectors)
        method = 'arnoldi'

    if np.any(residuals > RESIDUAL_TOLERANCE * scale):
        raise EigensolverError(
            f"eigenpair residuals up to {residuals.max():.3g} exceed {RESIDUAL_TOLERANCE * scale:.3g}",
            residuals,
        )

    order = _order(values)
    values, residuals = values[order], residuals[order]
    keep = values.size if k is None else min(k, values.size)
    keep = _drop_orphans(values, keep)
    return SpectrumResult(values[:keep], residuals[:keep], method)


def _normalize(rho):
    """Fix the arbitrary phase and scale of a null vector: unit trace, Hermitian"""
    trace = np.trace(rho)
    if abs(trace) == 0:
        raise EigensolverError("steady state has zero trace")
    rho = rho / trace
    return 0.5 * (rho + rho.conj().T)


def steady_state_method(liouvillian):
    """'svd' up to the dense limit, 'direct' up to DIRECT_SOLVE_LIMIT, 'arnoldi' above"""
    if liouvillian.dim <= liouvillian.fock.dense_limit:
        return 'svd'
    if liouvillian.dim <= DIRECT_SOLVE_LIMIT:
        return 'direct'
    return 'arnoldi'


def _svd_null_vector(liouvillian):
    _, singular, vh = linalg.svd(liouvillian.matrix.toarray())
    threshold = ZERO_TOLERANCE * max(singular[0], 1.0)
    kernel_dim = int(np.sum(singular < threshold))
    if kernel_dim > 1:
        raise DegenerateSteadyStateError(kernel_dim)
    if kernel_dim == 0:
        raise EigensolverError(f"no zero singular value (smallest {singular[-1]:.3g})", [singular[-1]])
    return vh[-1].conj()


def _direct_null_vector(liouvillian):
    dim = liouvillian.hilbert_dim
    # replace the first equation by the trace condition
    trace_row = sparse.csr_matrix(
        (np.ones(dim), (np.zeros(dim, dtype=int), np.arange(dim) * (dim + 1))),
        shape=(1, liouvillian.dim),
    )
    system = sparse.vstack([trace_row, liouvillian.matrix[1:]], format='csc')
    rhs = np.zeros(liouvillian.dim, dtype=complex)
    rhs[0] = 1.0
    solution = sparse_linalg.spsolve(system, rhs)
    if not np.all(np.isfinite(solution)):
        raise DegenerateSteadyStateError(None)
    return solution


def _arnoldi_null_vector(liouvillian):
    """Eigenvectors of largest real part; the zero mode must be the only one with |lambda| ~ 0"""
    dim = liouvillian.hilbert_dim
    k = min(STEADY_STATE_EIGENVALUES, liouvillian.dim - 2)
    start = vectorize(np.eye(dim, dtype=complex)) / dim
    try:
        values, vectors = sparse_linalg.eigs(
            liouvillian.matrix, k=k, which='LR', v0=start,
            ncv=min(liouvillian.dim, STEADY_STATE_KRYLOV), tol=RESIDUAL_TOLERANCE / 10,
        )
    except sparse_linalg.ArpackNoConvergence as error:
        raise EigensolverError(
            f"Arnoldi iteration converged for {len(error.eigenvalues)} of {k} eigenvalues"
        ) from error
    zero = np.abs(values) < ZERO_TOLERANCE
    if zero.sum() > 1:
        raise DegenerateSteadyStateError(int(zero.sum()))
    if not zero.any():
        smallest = float(np.min(np.abs(values)))
        raise EigensolverError(f"no zero eigenvalue (smallest |lambda| {smallest:.3g})", [smallest])
    return vectors[:, int(np.argmax(zero))]


NULL_VECTOR_SOLVERS = {
    'svd': _svd_null_vector,
    'direct': _direct_null_vector,
    'arnoldi': _arnoldi_null_vector,
}


def steady_state(liouvillian, method=None):
    """Trace-one density matrix spanning the kernel of L

    ``method`` defaults to ``steady_state_method(liouvillian)``. Raises
    DegenerateSteadyStateError when the kernel is more than one-dimensional.
    """
    method = method or steady_state_method(liouvillian)
    if method not in NULL_VECTOR_SOLVERS:
        raise ConfigurationError(f"unknown steady-state method {method!r}")
    vector = NULL_VECTOR_SOLVERS[method](liouvillian)
    residual = np.linalg.norm(liouvillian.matrix @ vector) / np.linalg.norm(vector)
    if residual > ZERO_TOLERANCE * max(liouvillian.norm(), 1.0):
        raise EigensolverError(f"steady-state residual {residual:.3g} too large", [residual])
    logger.debug("Steady state by %s, residual %.3g", method, residual)
    return _normalize(unvectorize(vector, liouvillian.hilbert_dim))


def evolve_rho(rho0, liouvillian, t_grid, method='DOP853', rtol=1e-10, atol=1e-12):
    """Density matrices on ``t_grid`` from integrating d vec(rho)/dt = L vec(rho)"""
    rho0 = np.asarray(rho0, dtype=complex)
    if abs(np.trace(rho0) - 1.0) > 1e-9:
        raise ConfigurationError(f"initial state has trace {np.trace(rho0):.12g}")
    if np.linalg.norm(rho0 - rho0.conj().T) > 1e-9:
        raise ConfigurationError("initial state is not Hermitian")
    t_grid = np.asarray(t_grid, dtype=float)
    matrix = liouvillian.matrix
    dim = liouvillian.hilbert_dim
    if t_grid[-1] == t_grid[0]:
        return np.repeat(rho0[None], t_grid.size, axis=0)
    solution = solve_ivp(
        lambda t, y: matrix @ y,
        (t_grid[0], t_grid[-1]),
        vectorize(rho0),
        method=method,
        t_eval=t_grid,
        rtol=rtol,
        atol=atol,
    )
    if not solution.success:
        time = float(solution.t[-1]) if solution.t.size else float(t_grid[0])
        raise StepControlError(time, solution.message)
    return np.stack([unvectorize(solution.y[:, i], dim) for i in range(solution.y.shape[1])])


def expectation(rho, op):
    op = op.toarray() if sparse.issparse(op) else np.asarray(op)
    return complex(np.trace(op @ rho))


def mode_occupations(rho, fock):
    return [expectation(rho, (a.conj().T @ a)).real for a in mode_operators(fock)]


def trace_distance(rho, sigma):
    return 0.5 * float(np.sum(np.abs(linalg.eigvalsh(rho - sigma))))


def mode_permutation(fock, order):
    """Hilbert-space permutation matrix relabelling modes: new mode i is old mode order[i]"""
    d, N = fock.cutoff, fock.n_modes
    indices = np.arange(fock.hilbert_dim).reshape((d,) * N)
    permuted = np.transpose(indices, axes=order).reshape(-1)
    return sparse.csr_matrix(
        (np.ones(permuted.size), (np.arange(permuted.size), permuted)),
        shape=(permuted.size, permuted.size),
    )


@dataclass(frozen=True)
class CutoffReport:
    cutoff: int
    terminal_population: float
    drift: float
    adequate: bool
    mean_occupation: float
    populations: tuple

    def to_dict(self):
        return {
            'cutoff': self.cutoff,
            'terminal_population': self.terminal_population,
            'drift': self.drift,
            'adequate': self.adequate,
            'mean_occupation': self.mean_occupation,
        }


def _single_mode_state(params, d, memory_budget):
    fock = FockConfig(cutoff=d, n_modes=1, memory_budget=memory_budget)
    return steady_state(build_liouvillian(params, CouplingSpec(mu=0.0), fock))


def validate_cutoff(params, d, memory_budget=DEFAULT_MEMORY_BUDGET):
    """Compare single-mode steady states at cutoffs d and d + 4"""
    if params.kappa1 == 0:
        # no gain: the vacuum is the state reached from the vacuum, at any cutoff
        populations = (1.0,) + (0.0,) * (d - 1)
        return CutoffReport(d, 0.0, 0.0, True, 0.0, populations)

    small = _single_mode_state(params, d, memory_budget)
    large = _single_mode_state(params, d + CUTOFF_STEP, memory_budget)
    padded = np.zeros_like(large)
    padded[:d, :d] = small
    populations = np.clip(np.diag(small).real, 0.0, None)
    terminal = float(populations[-1])
    drift = trace_distance(padded, large)
    report = CutoffReport(
        cutoff=d,
        terminal_population=terminal,
        drift=drift,
        adequate=terminal < TERMINAL_POPULATION_LIMIT and drift < DRIFT_LIMIT,
        mean_occupation=float(np.dot(np.arange(d), np.diag(small).real)),
        populations=tuple(float(p) for p in populations),
    )
    logger.debug("Cutoff d=%d: terminal %.3g, drift %.3g", d, terminal, drift)
    return report


def minimal_cutoff(params, start=2, stop=64, memory_budget=DEFAULT_MEMORY_BUDGET):
    """Smallest adequate cutoff in [start, stop]"""
    for d in range(max(start, 2), stop + 1):
        report = validate_cutoff(params, d, memory_budget)
        if report.adequate:
            return report
    raise ConfigurationError(f"no adequate Fock cutoff up to {stop}")


def fitting_cutoff(n_modes, ceiling, memory_budget=DEFAULT_MEMORY_BUDGET, dense_limit=DENSE_LIMIT,
                   floor=MIN_CUTOFF):
    """Largest cutoff in [floor, ceiling] whose N-mode Liouvillian fits the memory budget"""
    lowest = min(floor, ceiling)
    for d in range(ceiling, lowest - 1, -1):
        fock = FockConfig(cutoff=d, n_modes=n_modes, memory_budget=memory_budget, dense_limit=dense_limit)
        if fock.sizing().fits:
            return fock
    # raises SizingError
    fock.check()


@dataclass(frozen=True)
class GapCheck:
    """Spectral gap at a cutoff and one level below it"""

    cutoff: int
    gap: float
    reference_gap: float
    tolerance: float = GAP_TOLERANCE

    @property
    def reference_cutoff(self):
        return self.cutoff - 1

    @property
    def relative_change(self):
        if not self.gap > 0:
            return math.inf
        return abs(self.gap - self.reference_gap) / self.gap

    @property
    def converged(self):
        return bool(self.relative_change <= self.tolerance)

    def to_dict(self):
        return {
            'cutoff': self.cutoff,
            'reference_cutoff': self.reference_cutoff,
            'gap': self.gap,
            'reference_gap': self.reference_gap,
            'relative_change': self.relative_change,
            'tolerance': self.tolerance,
            'converged': self.converged,
        }


def check_gap_convergence(params, coupling, fock, result=None, k=GAP_CHECK_EIGENVALUES,
                          tolerance=GAP_TOLERANCE):
    """Compare the gap at ``fock.cutoff`` (or of ``result``) with the gap at cutoff - 1"""
    if fock.cutoff - 1 < 2:
        raise ConfigurationError(f"no smaller cutoff to compare d={fock.cutoff} with")
    if result is None:
        result = spectrum(build_liouvillian(params, coupling, fock), k=k)
    lower = replace(fock, cutoff=fock.cutoff - 1)
    reference = spectrum(build_liouvillian(params, coupling, lower), k=k)
    check = GapCheck(fock.cutoff, result.gap, reference.gap, tolerance)
    logger.info(
        "N=%d: gap %.6g at d=%d, %.6g at d=%d (relative change %.2g)",
        fock.n_modes, check.gap, check.cutoff, check.reference_gap, check.reference_cutoff,
        check.relative_change,
    )
    return check
