"""Benchmark matrix fetching and caching."""
import io
import logging
import os
import tarfile
import typing
from dataclasses import dataclass
from pathlib import Path

import requests

from .generate import SyntheticKind, generate_synthetic
from .matrix import SparseCsr, read_matrix_market, write_matrix_market

_LOGGER = logging.getLogger(__name__)

CACHE_DIR_ENV = "WARPSPMV_CACHE_DIR"
DEFAULT_CACHE_DIR = Path("~/.cache/warpspmv")
SUITESPARSE_URL = "https://sparse.tamu.edu/MM/{group}/{name}.tar.gz"
SYNTHETIC_PREFIX = "synthetic:"

# url -> archive bytes
TransportType = typing.Callable[[str], bytes]

# -----------------------------------------------------------------------------


class FetchError(Exception):
    """Raised when a matrix can't be fetched or doesn't match its declaration."""

    def __init__(self, name: str, reason: str):
        super().__init__(self)
        self.name = name
        self.reason = reason

    def __str__(self):
        return f"Failed to fetch {self.name}: {self.reason}"


@dataclass(frozen=True)
class KnownMatrix:
    """Benchmark matrix with its collection location and declared size."""

    name: str
    nrows: int
    nnz: int
    minrow: int
    maxrow: int

    # Collection group/name (None when not publicly available)
    group: typing.Optional[str] = None
    collection_name: typing.Optional[str] = None

    # Generator used offline (or always, for unpublished matrices)
    substitute: str = ""

    @property
    def url(self) -> typing.Optional[str]:
        """Archive URL in the public collection."""
        if (self.group is None) or (self.collection_name is None):
            return None

        return SUITESPARSE_URL.format(group=self.group, name=self.collection_name)


def _known(*matrices: KnownMatrix) -> typing.Dict[str, KnownMatrix]:
    return {m.name: m for m in matrices}


KNOWN_MATRICES: typing.Dict[str, KnownMatrix] = _known(
    KnownMatrix(
        "Circuit", 170998, 958936, 1, 353, "Hamm", "scircuit",
        "synthetic:powerlaw_rows:nrows=20000,maxrow=353,alpha=2.5",
    ),
    KnownMatrix(
        "Economics", 206500, 1273389, 1, 44, "Williams", "mac_econ_fwd500",
        "synthetic:powerlaw_rows:nrows=20000,maxrow=44,alpha=3.0",
    ),
    KnownMatrix(
        "Epidemiology", 525825, 2100225, 2, 4, "Williams", "mc2depi",
        "synthetic:uniform_band:nrows=20000,width=4",
    ),
    KnownMatrix(
        "FEMAccelerator", 121192, 2624331, 8, 81, "Williams", "cop20k_A",
        "synthetic:fem_tet_graph:n=10000,minrow=8,maxrow=81",
    ),
    KnownMatrix(
        "FEMCantilever", 62451, 4007383, 1, 78, "Williams", "cant",
        "synthetic:fem_tet_graph:n=6000,minrow=2,maxrow=78",
    ),
    KnownMatrix(
        "FEMHarbor", 46835, 2374001, 4, 145, "Bova", "rma10",
        "synthetic:fem_tet_graph:n=5000,minrow=4,maxrow=145",
    ),
    KnownMatrix(
        "FEMShip", 140874, 7813404, 24, 102, "DNVS", "shipsec1",
        "synthetic:fem_tet_graph:n=5000,minrow=24,maxrow=102",
    ),
    KnownMatrix(
        "FEMSpheres", 83334, 6010480, 1, 81, "Williams", "consph",
        "synthetic:fem_tet_graph:n=5000,minrow=2,maxrow=81",
    ),
    KnownMatrix(
        "Heart3K", 3129, 37035, 5, 21,
        substitute="synthetic:fem_tet_graph:n=3129,minrow=5,maxrow=21",
    ),
    KnownMatrix(
        "Heart5K", 4563, 52715, 6, 22,
        substitute="synthetic:fem_tet_graph:n=4563,minrow=6,maxrow=22",
    ),
    KnownMatrix(
        "Heart30K", 28639, 367443, 6, 24,
        substitute="synthetic:fem_tet_graph:n=28639,minrow=6,maxrow=24",
    ),
    KnownMatrix(
        "Protein", 36417, 4344765, 18, 204, "Williams", "pdb1HYS",
        "synthetic:fem_tet_graph:n=3000,minrow=18,maxrow=204",
    ),
    KnownMatrix(
        "QCD", 49152, 1916928, 39, 39, "QCD", "conf5_4-8x8-10",
        "synthetic:uniform_band:nrows=20000,width=39",
    ),
    KnownMatrix(
        "Webbase", 1000005, 3105536, 1, 4700, "Williams", "webbase-1M",
        "synthetic:powerlaw_rows:nrows=50000,maxrow=4700,alpha=2.0",
    ),
    KnownMatrix(
        "WindTunnel", 217918, 11634424, 2, 180, "Boeing", "pwtk",
        "synthetic:fem_tet_graph:n=5000,minrow=2,maxrow=180",
    ),
)

# -----------------------------------------------------------------------------


def default_cache_dir() -> Path:
    """Cache directory from the environment or the default location."""
    env_dir = os.environ.get(CACHE_DIR_ENV)
    if env_dir:
        return Path(env_dir)

    return DEFAULT_CACHE_DIR.expanduser()


def requests_transport(url: str, timeout: float = 60.0) -> bytes:
    """Download with requests."""
    response = requests.get(url, timeout=timeout)
    response.raise_for_status()
    return response.content


def parse_synthetic_name(
    name: str,
) -> typing.Tuple[SyntheticKind, typing.Dict[str, str], int]:
    """synthetic:<kind>[:key=value,...] -> (kind, params, seed)"""
    assert name.startswith(SYNTHETIC_PREFIX), f"Not a synthetic name: {name}"
    kind_text, _, params_text = name[len(SYNTHETIC_PREFIX) :].partition(":")

    try:
        kind = SyntheticKind(kind_text)
    except ValueError:
        raise FetchError(
            name,
            f"unknown generator {kind_text} "
            f"(available: {', '.join(k.value for k in SyntheticKind)})",
        )

    params: typing.Dict[str, str] = {}
    for item in params_text.split(","):
        item = item.strip()
        if not item:
            continue

        key, sep, value = item.partition("=")
        if not sep:
            raise FetchError(name, f"expected key=value, got {item}")

        params[key.strip()] = value.strip()

    seed = int(params.pop("seed", 0))
    return kind, params, seed


def _synthetic_params(params: typing.Dict[str, str]) -> typing.Dict[str, typing.Any]:
    typed: typing.Dict[str, typing.Any] = {}
    for key, value in params.items():
        try:
            typed[key] = int(value)
        except ValueError:
            typed[key] = float(value)

    return typed


def generate_named(name: str, seed: typing.Optional[int] = None) -> SparseCsr:
    """Generate a matrix from a synthetic:<kind>:k=v name."""
    kind, params, name_seed = parse_synthetic_name(name)
    return generate_synthetic(
        kind, _synthetic_params(params), seed=name_seed if seed is None else seed
    )


def _synthetic_path(cache_dir: Path, name: str) -> Path:
    slug = name[len(SYNTHETIC_PREFIX) :].replace(":", "_").replace(",", "_")
    slug = slug.replace("=", "-")
    return cache_dir / "synthetic" / f"{slug}.mtx"


def _write_generated(path: Path, m: SparseCsr) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as mtx_file:
        write_matrix_market(m, mtx_file)

    return path


def _extract_mtx(archive: bytes, collection_name: str) -> bytes:
    """Pull <name>.mtx out of a collection .tar.gz archive."""
    wanted = f"{collection_name}.mtx"
    with tarfile.open(fileobj=io.BytesIO(archive), mode="r:gz") as tar_file:
        for member in tar_file.getmembers():
            if member.isfile() and (Path(member.name).name == wanted):
                extracted = tar_file.extractfile(member)
                assert extracted is not None
                return extracted.read()

    raise FetchError(collection_name, f"{wanted} not found in archive")


def verify_dimensions(known: KnownMatrix, m: SparseCsr):
    """Raise FetchError unless rows and nonzeros match the declaration."""
    if (m.nrows != known.nrows) or (m.nnz != known.nnz):
        raise FetchError(
            known.name,
            f"expected {known.nrows} rows / {known.nnz} nonzeros, "
            f"got {m.nrows} / {m.nnz}",
        )


def fetch_matrix(
    name: str,
    cache_dir: typing.Optional[typing.Union[str, Path]] = None,
    transport: typing.Optional[TransportType] = None,
    offline: bool = False,
    fallback: bool = True,
) -> Path:
    """
    Local Matrix Market path for a benchmark matrix.

    Cached files are returned without touching the transport. Names starting
    with synthetic: are generated into the cache. Unpublished matrices, offline
    mode, and (with fallback) download failures use the matrix's generator
    substitute.
    """
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()

    if name.startswith(SYNTHETIC_PREFIX):
        path = _synthetic_path(cache_dir, name)
        if not path.is_file():
            _write_generated(path, generate_named(name))

        return path

    known = KNOWN_MATRICES.get(name)
    if known is None:
        raise FetchError(
            name, f"unknown matrix (available: {', '.join(sorted(KNOWN_MATRICES))})"
        )

    url = known.url
    if url is None or offline:
        _LOGGER.info("Using generator substitute for %s", name)
        return fetch_matrix(known.substitute, cache_dir=cache_dir)

    assert known.group is not None
    assert known.collection_name is not None
    path = cache_dir / known.group / f"{known.collection_name}.mtx"
    if path.is_file():
        _LOGGER.debug("Cache hit for %s: %s", name, path)
        return path

    transport = transport or requests_transport
    _LOGGER.info("Downloading %s from %s", name, url)
    try:
        archive = transport(url)
    except (requests.RequestException, OSError) as error:
        if not fallback:
            raise FetchError(name, str(error))

        _LOGGER.warning(
            "Download of %s failed (%s); using %s", name, error, known.substitute
        )
        return fetch_matrix(known.substitute, cache_dir=cache_dir)

    try:
        mtx_bytes = _extract_mtx(archive, known.collection_name)
    except tarfile.TarError as error:
        raise FetchError(name, f"bad archive: {error}")

    path.parent.mkdir(parents=True, exist_ok=True)
    partial_path = path.with_suffix(".mtx.partial")
    partial_path.write_bytes(mtx_bytes)

    m = read_matrix_market(partial_path)
    try:
        verify_dimensions(known, m)
    except FetchError:
        partial_path.unlink()
        raise

    partial_path.rename(path)
    return path


def load_matrix(
    source: str,
    cache_dir: typing.Optional[typing.Union[str, Path]] = None,
    transport: typing.Optional[TransportType] = None,
    offline: bool = False,
) -> SparseCsr:
    """Load a matrix from a file path, a known name, or a synthetic: name."""
    if source.startswith(SYNTHETIC_PREFIX):
        return generate_named(source)

    source_path = Path(source)
    if source_path.is_file():
        return read_matrix_market(source_path)

    return read_matrix_market(
        fetch_matrix(source, cache_dir=cache_dir, transport=transport, offline=offline)
    )
