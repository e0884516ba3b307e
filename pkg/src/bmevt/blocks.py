"""Block extraction and empirical distribution utilities.

A series of length n is split into k = floor(n / (m + l)) consecutive
chunks of m + l observations: a "big block" of m values whose maximum is
kept, followed by a "small block" of l values that is skipped so that
successive maxima decouple under serial dependence.  l = 0 recovers the
plain disjoint blocking used everywhere in practice.

Also provides suffix empirical cdfs F^(j) (the cdf of series[j..n]) and
the extremal-index pseudo-observations Y_i = -m * log F(M_i), which are
approximately exponential with rate theta when m is large.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BlockConfig:
    """Big-block size m and small-block gap l."""

    m: int
    l: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("big-block size m must be >= 1")
        if self.l < 0:
            raise ValueError("small-block size l must be >= 0")

    def block_count(self, n):
        """Number of complete (m + l)-blocks in a series of length n."""
        return n // (self.m + self.l)


@dataclass(frozen=True)
class PseudoObs:
    """Pseudo-observations for the extremal index.

    y holds Y_i = -m_tilde * log F(M_i) for the k_tilde disjoint block
    maxima M_i; all entries are >= 0, and blocks containing the suffix
    maximum give exactly 0.
    """

    y: np.ndarray
    m_tilde: int
    k_tilde: int


def block_maxima(series, config):
    """Disjoint big-block maxima of a series.

    Block i covers positions (i-1)(m+l)+1 .. (i-1)(m+l)+m (1-based); the
    trailing l observations of each chunk and any incomplete final chunk
    are discarded.

    Parameters
    ----------
    series : array-like, length n >= m + l
    config : BlockConfig

    Returns
    -------
    ndarray of the k block maxima.
    """
    x = np.asarray(series, dtype=float)
    m, l = config.m, config.l
    k = len(x) // (m + l)
    if k < 1:
        raise ValueError("series too short: need at least m + l observations")
    chunks = x[: k * (m + l)].reshape(k, m + l)
    return chunks[:, :m].max(axis=1)


def ecdf(series, j=1):
    """Empirical cdf of the suffix series[j..n] (j is 1-based).

    Returns a vectorized function x -> (n - j + 1)^(-1) * #{t >= j : X_t <= x},
    the right-closed step ecdf.  j = 1 gives the full-sample cdf.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if not 1 <= j <= n:
        raise ValueError(f"origin j={j} outside 1..{n}")
    suffix = np.sort(x[j - 1 :])
    denom = float(len(suffix))

    def cdf(q):
        q = np.asarray(q, dtype=float)
        out = np.searchsorted(suffix, q, side="right") / denom
        return out if out.ndim else float(out)

    return cdf


def pseudo_observations(series, m_tilde, j=1):
    """Extremal-index pseudo-observations from origin-j suffix blocks.

    Splits series[j..n] into k_tilde = floor((n - j + 1)/m_tilde) plain
    disjoint blocks, takes their maxima M_i, and returns
    Y_i = -m_tilde * log F^(j)(M_i) where F^(j) is the suffix ecdf.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if not 1 <= j <= n:
        raise ValueError(f"origin j={j} outside 1..{n}")
    suffix = x[j - 1 :]
    if len(suffix) < m_tilde:
        raise ValueError("series too short for one block from this origin")
    maxima = block_maxima(suffix, BlockConfig(m=m_tilde, l=0))
    f = ecdf(x, j)(maxima)
    # each maximum occurs in the suffix, so its ecdf value is >= 1/(n-j+1)
    assert np.all(f > 0.0)
    y = -m_tilde * np.log(f)
    return PseudoObs(y=y, m_tilde=int(m_tilde), k_tilde=len(y))
