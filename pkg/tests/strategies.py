"""Hypothesis strategies shared by the test cases."""
import typing

import numpy as np
from hypothesis import strategies as st

from warpspmv.generate import powerlaw_rows, random_matrix, uniform_band
from warpspmv.matrix import SparseCsr

DEFAULT_DENSITIES = (0.0, 0.05, 0.2, 0.6, 1.0)


@st.composite
def csr_matrices(
    draw,
    square: bool = False,
    max_rows: int = 40,
    densities: typing.Sequence[float] = DEFAULT_DENSITIES,
) -> SparseCsr:
    """Random, skewed, or banded matrices, including empty rows."""
    nrows = draw(st.integers(min_value=1, max_value=max_rows))
    ncols = nrows if square else draw(st.integers(min_value=1, max_value=max_rows))
    seed = draw(st.integers(min_value=0, max_value=2 ** 16))
    rng = np.random.default_rng(seed)

    kind = draw(st.sampled_from(["random", "powerlaw", "band"]))
    if kind == "powerlaw":
        # Skewed row lengths
        return powerlaw_rows(
            nrows,
            alpha=draw(st.sampled_from([1.5, 2.0, 3.0])),
            maxrow=draw(st.integers(min_value=1, max_value=ncols)),
            ncols=ncols,
            rng=rng,
        )

    if kind == "band":
        return uniform_band(
            nrows,
            width=draw(st.integers(min_value=1, max_value=min(ncols, 40))),
            ncols=ncols,
            rng=rng,
        )

    return random_matrix(
        nrows,
        ncols=ncols,
        density=draw(st.sampled_from(list(densities))),
        empty_fraction=draw(st.sampled_from([0.0, 0.3])),
        rng=rng,
    )


warp_sizes = st.sampled_from([1, 2, 4, 8, 32])

# Warp sizes of the kernel comparison protocol
protocol_warp_sizes = st.sampled_from([4, 8, 32])
