"""Built-in verification models and the external-process model protocol.

``Example1`` is a normalized product of quintic polynomials on the unit cube
with a closed-form variance; ``SpringMassSystem`` returns the three ascending
eigenvalues of a random 3-DOF spring-mass system.  :class:`ExternalModel`
drives a user simulator through a line-oriented text protocol over the
child's standard streams:

* on startup the child prints ``PDDUQ 1 <N> <M>``;
* each request is a line of ``N`` space-separated decimals;
* each response is a line of ``M`` space-separated decimals.

Decimals are written with 17 significant digits so values round-trip exactly.
"""

from __future__ import annotations

import math
import queue
import subprocess
import sys
import threading
from typing import Callable, Sequence

import numpy as np

from .linalg import generalized_eigvalsh
from .random_input import Lognormal, RandomInput, Uniform

__all__ = [
    "Example1",
    "example1_eval",
    "example1_exact_variance",
    "example1_coefficients",
    "SpringMassSystem",
    "spring_mass_eigenvalues",
    "ExternalModel",
    "ExternalModelError",
    "ExternalTimeout",
    "MalformedResponse",
    "ChildExited",
    "NonFiniteOutput",
    "serve_model",
    "PROTOCOL_VERSION",
]

PROTOCOL_VERSION = 1


# ---------------------------------------------------------------------------
# Example 1: product of quintics on [0, 1]^N


class Example1:
    """``y(x) = prod_i (3 x_i^5 / i + 1) / prod_i (1 + 1 / (2 i))`` with uniform inputs on ``[0, 1]``.

    The normalization makes the mean exactly one.
    """

    def __init__(self, dim: int = 5):
        if dim < 1:
            raise ValueError("dimension must be positive")
        self.dim = int(dim)
        i = np.arange(1, self.dim + 1, dtype=float)
        self._a = 3.0 / i
        self._norm = float(np.prod(1.0 + 1.0 / (2.0 * i)))

    n_outputs = 1

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got shape {x.shape}")
        return np.prod(self._a * x**5 + 1.0, axis=1) / self._norm

    def random_input(self, convention: str = "unit") -> RandomInput:
        return RandomInput.iid(Uniform(0.0, 1.0, convention), self.dim)

    def exact_variance(self) -> float:
        return example1_exact_variance(self.dim)


def example1_eval(x, dim: int | None = None):
    x = np.asarray(x, dtype=float)
    model = Example1(dim or x.shape[-1])
    y = model(x)
    return float(y[0]) if x.ndim == 1 else y


def example1_exact_variance(N: int) -> float:
    """Closed-form variance ``prod_{i<=N} (25 / (11 (1 + 2i)^2) + 1) - 1``."""
    if N < 1:
        raise ValueError("N must be positive")
    return math.prod(25.0 / (11.0 * (1.0 + 2.0 * i) ** 2) + 1.0 for i in range(1, N + 1)) - 1.0


def _quintic_legendre_coefficients(i: int) -> np.ndarray:
    """Orthonormal shifted-Legendre coefficients of ``(3 x^5 / i + 1) / (1 + 1/(2i))``, orders 0..5.

    Uses exact moments ``E[x^k psi_j(x)]`` from the power-basis form of the
    shifted Legendre polynomials.
    """
    from numpy.polynomial import legendre as L
    from numpy.polynomial import polynomial as P

    norm = 1.0 + 1.0 / (2.0 * i)
    g = np.array([1.0, 0, 0, 0, 0, 3.0 / i]) / norm  # power basis in x
    out = np.zeros(6)
    for j in range(6):
        # psi_j(x) = sqrt(2j+1) P_j(2x - 1) in the power basis of x
        pj = L.leg2poly(np.eye(j + 1)[j])
        shifted = np.zeros(1)
        for k, c in enumerate(pj):
            shifted = P.polyadd(shifted, c * P.polypow([-1.0, 2.0], k))
        prod = P.polymul(g, math.sqrt(2 * j + 1) * shifted)
        out[j] = sum(c / (k + 1) for k, c in enumerate(prod))
    return out


def example1_coefficients(N: int) -> dict:
    """Exact PDD coefficients of Example 1 on the unit-interval Legendre basis.

    Returns ``{(u, j): C}`` with 0-based subsets; the model factorizes, so
    ``C_{u,j} = prod_{i in u} c_i[j_i] * prod_{i not in u} c_i[0]``.
    """
    import itertools

    c = [_quintic_legendre_coefficients(i + 1) for i in range(N)]
    out = {}
    for s in range(1, N + 1):
        for u in itertools.combinations(range(N), s):
            rest = math.prod(c[i][0] for i in range(N) if i not in u)
            for j in itertools.product(range(1, 6), repeat=s):
                out[(u, j)] = rest * math.prod(c[i][jj] for i, jj in zip(u, j))
    return out


# ---------------------------------------------------------------------------
# Example 2: 3-DOF spring-mass system


class SpringMassSystem:
    """Random 3-DOF spring-mass system ``K(X) phi = lam M(X) phi``.

    ``M = diag(mu_1 X_1, mu_2 X_2, mu_3 X_3)`` and the springs are
    ``K_i = mu_{i+3} X_{i+3}`` (``i = 1..6``): springs 1-3 connect each mass
    to ground, spring 4 joins masses 1-2, spring 5 joins masses 2-3 and
    spring 6 joins masses 1-3.

    Parameters
    ----------
    scales : sequence of 9 floats
        ``mu_1 .. mu_9``; the default has unit masses and springs except
        ``mu_9 = 3``.
    cov : float
        Coefficient of variation of the unit-mean lognormal inputs.
    """

    n_outputs = 3
    dim = 9

    def __init__(self, scales: Sequence[float] | None = None, cov: float = 0.3):
        self.scales = np.array([1.0] * 8 + [3.0] if scales is None else scales, dtype=float)
        if self.scales.shape != (9,) or np.any(self.scales <= 0):
            raise ValueError("need nine positive scales")
        self.cov = float(cov)

    def random_input(self) -> RandomInput:
        return RandomInput.iid(Lognormal.from_mean_cov(1.0, self.cov), 9)

    def matrices(self, x):
        """Mass diagonals ``(n, 3)`` and stiffness matrices ``(n, 3, 3)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != 9:
            raise ValueError(f"expected 9 coordinates, got shape {x.shape}")
        if np.any(x <= 0):
            raise ValueError("spring-mass inputs must be positive")
        v = x * self.scales
        m = v[:, :3]
        k1, k2, k3, k4, k5, k6 = (v[:, 3 + i] for i in range(6))
        K = np.empty((len(x), 3, 3))
        K[:, 0, 0] = k1 + k4 + k6
        K[:, 0, 1] = K[:, 1, 0] = -k4
        K[:, 0, 2] = K[:, 2, 0] = -k6
        K[:, 1, 1] = k4 + k5 + k2
        K[:, 1, 2] = K[:, 2, 1] = -k5
        K[:, 2, 2] = k5 + k3 + k6
        return m, K

    def __call__(self, x) -> np.ndarray:
        m, K = self.matrices(x)
        return generalized_eigvalsh(K, m)


def spring_mass_eigenvalues(x, scales=None) -> np.ndarray:
    """Ascending eigenvalues for one input (shape ``(9,)``) or many (``(n, 9)``)."""
    x = np.asarray(x, dtype=float)
    lam = SpringMassSystem(scales)(x)
    return lam[0] if x.ndim == 1 else lam


# ---------------------------------------------------------------------------
# external processes


class ExternalModelError(RuntimeError):
    """Base class of external-model failures."""


class ExternalTimeout(ExternalModelError):
    """The child did not answer within the timeout."""


class MalformedResponse(ExternalModelError):
    """The child answered with an unparsable or wrongly sized line."""


class ChildExited(ExternalModelError):
    """The child process terminated."""

    def __init__(self, message, returncode=None):
        super().__init__(message)
        self.returncode = returncode


class NonFiniteOutput(ExternalModelError):
    """The child returned NaN or infinity."""


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


class _Child:
    def __init__(self, command, timeout, dim, n_outputs):
        self.timeout = timeout
        self.proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, bufsize=1
        )
        self.lines: queue.Queue = queue.Queue()
        self.reader = threading.Thread(target=self._pump, daemon=True)
        self.reader.start()
        head = self.readline()
        parts = head.split()
        if len(parts) != 4 or parts[0] != "PDDUQ" or parts[1] != str(PROTOCOL_VERSION):
            self.close()
            raise MalformedResponse(f"bad handshake line {head.strip()!r}")
        n, m = int(parts[2]), int(parts[3])
        if dim is not None and n != dim:
            self.close()
            raise MalformedResponse(f"child expects {n} inputs, model declared {dim}")
        if n_outputs is not None and m != n_outputs:
            self.close()
            raise MalformedResponse(f"child returns {m} outputs, model declared {n_outputs}")
        self.dim, self.n_outputs = n, m

    def _pump(self):
        for line in self.proc.stdout:
            self.lines.put(line)
        self.lines.put(None)

    def readline(self) -> str:
        try:
            line = self.lines.get(timeout=self.timeout)
        except queue.Empty:
            self.close()
            raise ExternalTimeout(f"no response within {self.timeout} s") from None
        if line is None:
            code = self.proc.wait()
            err = self.proc.stderr.read().strip() if self.proc.stderr else ""
            raise ChildExited(f"child exited with status {code}" + (f": {err}" if err else ""), code)
        return line

    def request(self, x) -> np.ndarray:
        try:
            self.proc.stdin.write(" ".join(_fmt(v) for v in x) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError):
            code = self.proc.wait()
            raise ChildExited(f"child exited with status {code}", code) from None
        line = self.readline()
        parts = line.split()
        if len(parts) != self.n_outputs:
            raise MalformedResponse(f"expected {self.n_outputs} values, got {line.strip()!r}")
        try:
            y = np.array([float(p) for p in parts])
        except ValueError:
            raise MalformedResponse(f"unparsable response {line.strip()!r}") from None
        if not np.all(np.isfinite(y)):
            raise NonFiniteOutput(f"non-finite output {line.strip()!r} for input {list(map(float, x))}")
        return y

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self):
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class ExternalModel:
    """A model evaluated by a pool of child processes.

    Parameters
    ----------
    command : list of str
        Program and arguments.
    dim, n_outputs : int, optional
        Expected sizes; checked against the handshake.
    timeout : float
        Seconds to wait for each response line.
    workers : int
        Child processes; points of one call are split between them.

    A child that violates the protocol is restarted before the next request;
    the error itself is raised to the caller.
    """

    def __init__(self, command, dim=None, n_outputs=None, timeout: float = 30.0, workers: int = 1):
        self.command = list(command)
        self.timeout = float(timeout)
        self.workers = max(1, int(workers))
        self._children: list[_Child | None] = [None] * self.workers
        self._declared = (dim, n_outputs)
        first = self._child(0)
        self.dim, self.n_outputs = first.dim, first.n_outputs
        self.eval_count = 0
        self._lock = threading.Lock()

    def _child(self, k) -> _Child:
        c = self._children[k]
        if c is None or not c.alive():
            c = _Child(self.command, self.timeout, *self._declared)
            self._children[k] = c
        return c

    def _run(self, k, rows):
        out = []
        for x in rows:
            child = self._child(k)
            try:
                out.append(child.request(x))
            except ExternalModelError:
                child.close()
                self._children[k] = None
                raise
        return out

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got shape {x.shape}")
        if self.workers == 1 or len(x) < 2:
            rows = self._run(0, x)
        else:
            chunks = np.array_split(np.arange(len(x)), self.workers)
            results: list = [None] * self.workers
            errors: list = []

            def work(k):
                try:
                    results[k] = self._run(k, x[chunks[k]])
                except Exception as exc:  # re-raised in the caller thread
                    errors.append(exc)

            threads = [threading.Thread(target=work, args=(k,)) for k in range(self.workers) if len(chunks[k])]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            if errors:
                raise errors[0]
            rows = [r for part in results if part for r in part]
        with self._lock:
            self.eval_count += len(x)
        y = np.array(rows).reshape(len(x), self.n_outputs)
        return y[:, 0] if self.n_outputs == 1 else y

    def close(self):
        for c in self._children:
            if c is not None:
                c.close()
        self._children = [None] * self.workers

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_model(func: Callable, dim: int, n_outputs: int = 1, stdin=None, stdout=None):
    """Serve ``func`` (one point -> ``n_outputs`` values) over the text protocol.

    Intended for the child side: ``serve_model(f, N, M)`` at the end of a
    script turns it into an external model.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stdout.write(f"PDDUQ {PROTOCOL_VERSION} {dim} {n_outputs}\n")
    stdout.flush()
    for line in stdin:
        if not line.strip():
            continue
        x = np.array([float(t) for t in line.split()])
        y = np.atleast_1d(np.asarray(func(x), dtype=float))
        stdout.write(" ".join(_fmt(v) for v in y) + "\n")
        stdout.flush()
