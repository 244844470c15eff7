"""Friction grids and 1D cross-section roughness tables.

Grid convention: ``values[row, col]`` with row 0 at the southern edge
(``origin`` is the lower-left corner). Cells own their lower and left
edges. ESRI ASCII files are written north row first, as the format
requires.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import ArgumentError, EmptyInputError, ParseError

log = logging.getLogger(__name__)

NODATA = -9999.0
N_MIN, N_MAX = 0.025, 0.25
# lowest value of the lab measurement range, used wherever no n was measured
NODATA_FILL = N_MIN
MAX_SEGMENTS = 20


@dataclass(frozen=True)
class FrictionGrid:
    origin: Tuple[float, float]
    cell_size: float
    values: np.ndarray
    nodata: float = NODATA

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise ArgumentError("grid values must be a 2D array")
        if not self.cell_size > 0:
            raise ArgumentError("cell_size must be positive")
        data = vals[vals != self.nodata]
        if data.size and (data.min() < N_MIN or data.max() > N_MAX):
            raise ArgumentError(f"grid values must lie in [{N_MIN}, {N_MAX}] or be nodata")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nrows(self):
        return self.values.shape[0]

    @property
    def ncols(self):
        return self.values.shape[1]

    def cell_of(self, x, y):
        """Column and row indices of the cell owning each point (may be out of range)."""
        col = np.floor((np.asarray(x, dtype=np.float64) - self.origin[0]) / self.cell_size)
        row = np.floor((np.asarray(y, dtype=np.float64) - self.origin[1]) / self.cell_size)
        return col.astype(np.int64), row.astype(np.int64)


@dataclass(frozen=True)
class CrossSection:
    id: str
    stations: np.ndarray
    xy: Optional[np.ndarray] = None
    elevations: Optional[np.ndarray] = None
    n_values: Optional[np.ndarray] = None
    segment_breaks: Tuple[float, ...] = ()
    segment_ends: Tuple[float, ...] = ()
    segment_n: Tuple[float, ...] = ()
    mean_n: Optional[float] = None
    mean_station_n: Optional[float] = None
    outside_count: int = 0

    def __post_init__(self):
        st = np.asarray(self.stations, dtype=np.float64).ravel()
        if st.size == 0:
            raise EmptyInputError(f"section {self.id!r} has no stations")
        if np.any(np.diff(st) <= 0):
            raise ArgumentError(f"section {self.id!r}: stations must be strictly increasing")
        object.__setattr__(self, "stations", st)
        for name, width in (("xy", 2), ("elevations", None), ("n_values", None)):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            v = v.reshape(-1, width) if width else v.ravel()
            if v.shape[0] != st.size:
                raise ArgumentError(f"section {self.id!r}: {name} length differs from stations")
            object.__setattr__(self, name, v)
        if len(self.segment_breaks) > MAX_SEGMENTS:
            raise ArgumentError(f"section {self.id!r}: more than {MAX_SEGMENTS} segments")


def rasterize(tiles: Mapping, origin=(0.0, 0.0), cell_size=1.0, nodata=NODATA) -> FrictionGrid:
    """Place per-tile n values on a grid spanning the tiles' bounding box.

    Keys are :class:`~pcfriction.pointcloud.TileIndex` or ``(col, row)``
    tuples relative to ``origin``. The grid's own origin is shifted to the
    lowest occupied column and row; unoccupied cells get ``nodata``.
    """
    if not tiles:
        raise EmptyInputError("no tiles to rasterize")
    keys = [(getattr(k, "col", None), getattr(k, "row", None)) if hasattr(k, "col") else tuple(k)
            for k in tiles]
    cols = np.array([c for c, _ in keys])
    rows = np.array([r for _, r in keys])
    if cols.min() < 0 or rows.min() < 0:
        raise ArgumentError("tile indices must be non-negative relative to the origin")
    c0, r0 = int(cols.min()), int(rows.min())
    vals = np.full((int(rows.max()) - r0 + 1, int(cols.max()) - c0 + 1), nodata, dtype=np.float64)
    for (c, r), v in zip(keys, tiles.values()):
        vals[r - r0, c - c0] = v
    grid_origin = (origin[0] + c0 * cell_size, origin[1] + r0 * cell_size)
    return FrictionGrid(grid_origin, cell_size, vals, nodata)


def sample_n_at_stations(grid: FrictionGrid, xy) -> Tuple[np.ndarray, int]:
    """Look up n under each station; returns ``(n_values, outside_count)``.

    Nodata cells and stations outside the grid get the no-data fill.
    """
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    col, row = grid.cell_of(xy[:, 0], xy[:, 1])
    inside = (col >= 0) & (col < grid.ncols) & (row >= 0) & (row < grid.nrows)
    out = np.full(xy.shape[0], NODATA_FILL)
    vals = grid.values[row[inside], col[inside]]
    out[inside] = np.where(vals == grid.nodata, NODATA_FILL, vals)
    outside = int((~inside).sum())
    if outside:
        log.warning("%d stations fall outside the grid; filled with %.3f", outside, NODATA_FILL)
    return out, outside


def horton_einstein(segments) -> float:
    """Compound n over segments of wetted length ``P_i`` and roughness ``n_i``.

    ``n_c = (sum(P_i * n_i**1.5) / sum(P_i)) ** (2/3)``
    """
    segments = list(segments)
    if not segments:
        raise EmptyInputError("no segments to compound")
    for P, n in segments:
        if not P > 0 or not n > 0:
            raise ArgumentError("wetted lengths and n values must be positive")
    num = math.fsum(P * n ** 1.5 for P, n in segments)
    den = math.fsum(P for P, _ in segments)
    ns = [n for _, n in segments]
    # the power round trip can drift an ulp past the bounds (or off a uniform n)
    return min(max((num / den) ** (2.0 / 3.0), min(ns)), max(ns))


# -- clustering -------------------------------------------------------------

def _zscore(v):
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else np.zeros_like(v)


def kmeans_lloyd(features, k, seed=0, max_iter=300):
    """Lloyd's algorithm with seeded farthest-point initialization.

    The first center is a uniformly drawn point; each further center is the
    point farthest from all chosen centers (lowest index on ties). Clusters
    left empty are given the point farthest from its own center. Returns
    integer labels.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if not 1 <= k <= N:
        raise ArgumentError(f"k={k} must lie in [1, {N}]")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(N))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        cand = d2.copy()
        cand[chosen] = -1.0
        nxt = int(np.argmax(cand))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    centers = X[chosen].copy()

    labels = None
    for _ in range(max_iter):
        dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(dist, axis=1)
        for c in range(k):
            if not np.any(new == c):
                counts = np.bincount(new, minlength=k)
                own = dist[np.arange(N), new]
                movable = counts[new] > 1
                own = np.where(movable, own, -1.0)
                p = int(np.argmax(own))
                new[p] = c
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = X[labels == c].mean(axis=0)
    return labels


def _runs(labels):
    starts = [0] + [i for i in range(1, len(labels)) if labels[i] != labels[i - 1]]
    return [(s, e) for s, e in zip(starts, starts[1:] + [len(labels)])]


def cluster_segments(stations, n_values, k, seed=0, spatial_only=False, max_iter=300):
    """Contiguous station index ranges ``[(start, stop), ...]``, at most ``k`` of them.

    K-Means runs on z-scored station position, plus z-scored n unless
    ``spatial_only``. Label runs along the section become segments; while
    there are more than ``k`` runs the shortest is merged into the
    neighbour with the closer mean n.
    """
    st = np.asarray(stations, dtype=np.float64).ravel()
    nv = np.asarray(n_values, dtype=np.float64).ravel()
    if k < 1:
        raise ArgumentError("k must be >= 1")
    if k > st.size:
        raise ArgumentError(f"k={k} exceeds the {st.size} stations")
    feats = [_zscore(st)] if spatial_only else [_zscore(st), _zscore(nv)]
    labels = kmeans_lloyd(np.column_stack(feats), k, seed=seed, max_iter=max_iter)
    runs = _runs(labels)
    while len(runs) > k:
        sizes = [e - s for s, e in runs]
        i = int(np.argmin(sizes))
        mean_i = nv[runs[i][0]:runs[i][1]].mean()
        if i == 0:
            j = 1
        elif i == len(runs) - 1:
            j = i - 1
        else:
            left = abs(nv[runs[i - 1][0]:runs[i - 1][1]].mean() - mean_i)
            right = abs(nv[runs[i + 1][0]:runs[i + 1][1]].mean() - mean_i)
            j = i - 1 if left <= right else i + 1
        a, b = sorted((i, j))
        runs[a:b + 1] = [(runs[a][0], runs[b][1])]
    return runs


def cluster_stations(stations, n_values, k, seed=0, spatial_only=False, max_iter=300):
    """Segment breaks as the station value at which each segment starts."""
    st = np.asarray(stations, dtype=np.float64).ravel()
    return [float(st[s]) for s, _ in
            cluster_segments(st, n_values, k, seed, spatial_only, max_iter)]


def station_lengths(stations, elevations=None):
    """Wetted length represented by each station.

    Each station owns the half-intervals to its neighbours, so the lengths
    tile the section end to end. With elevations the half-intervals are
    measured along the profile instead of in plan.
    """
    st = np.asarray(stations, dtype=np.float64)
    if st.size == 1:
        return np.ones(1)
    ds = np.diff(st)
    if elevations is not None:
        ds = np.hypot(ds, np.diff(np.asarray(elevations, dtype=np.float64)))
    half = ds / 2.0
    P = np.zeros(st.size)
    P[:-1] += half
    P[1:] += half
    return P


def compound_section(section: CrossSection, grid: FrictionGrid, max_segments=MAX_SEGMENTS,
                     seed=0, spatial_only=False, profile_aware=False) -> CrossSection:
    """Sample, segment and compound one cross section.

    Returns a copy of ``section`` carrying the sampled station n, at most
    ``max_segments`` segments with their compounded n, the compounded n of
    the whole section (``mean_n``) and the plain station mean
    (``mean_station_n``).
    """
    if not 1 <= max_segments <= MAX_SEGMENTS:
        raise ArgumentError(f"max_segments must lie in [1, {MAX_SEGMENTS}]")
    if section.xy is None:
        raise ArgumentError(f"section {section.id!r} has no georeferenced coordinates")
    n_st, outside = sample_n_at_stations(grid, section.xy)
    st = section.stations
    P = station_lengths(st, section.elevations if profile_aware else None)
    k = min(max_segments, st.size)
    runs = cluster_segments(st, n_st, k, seed=seed, spatial_only=spatial_only)

    # segment edges sit halfway between the last and first stations of neighbours
    edges = [float(st[0])] + [float((st[s - 1] + st[s]) / 2.0) for s, _ in runs[1:]] + [float(st[-1])]
    seg_n, seg_P = [], []
    for s, e in runs:
        seg_n.append(horton_einstein(zip(P[s:e], n_st[s:e])))
        seg_P.append(math.fsum(P[s:e]))
    mean_n = horton_einstein(zip(seg_P, seg_n))
    return replace(section, n_values=n_st, segment_breaks=tuple(edges[:-1]),
                   segment_ends=tuple(edges[1:]), segment_n=tuple(seg_n),
                   mean_n=mean_n, mean_station_n=float(np.mean(n_st)), outside_count=outside)


# -- file formats -----------------------------------------------------------

_ESRI_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value")


def format_esri_ascii(grid: FrictionGrid) -> str:
    lines = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.origin[0]!r}",
        f"yllcorner {grid.origin[1]!r}",
        f"cellsize {float(grid.cell_size)!r}",
        f"NODATA_value {float(grid.nodata)!r}",
    ]
    for row in grid.values[::-1]:
        lines.append(" ".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def export_grid_esri_ascii(grid: FrictionGrid, path) -> None:
    Path(path).write_text(format_esri_ascii(grid))


def read_esri_ascii(path):
    """Return ``(values, header)`` with values south row first.

    Accepts either corner or center registration; centers are converted to
    corners in the header.
    """
    text = Path(path).read_text().split("\n")
    header = {}
    i = 0
    while i < len(text):
        parts = text[i].split()
        if len(parts) == 2 and not _numeric(parts[0]):
            header[parts[0].lower()] = parts[1]
            i += 1
        else:
            break
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        cs = float(header["cellsize"])
        if "xllcorner" in header:
            x0, y0 = float(header["xllcorner"]), float(header["yllcorner"])
        else:
            x0 = float(header["xllcenter"]) - cs / 2
            y0 = float(header["yllcenter"]) - cs / 2
        nodata = float(header.get("nodata_value", NODATA))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad ESRI ASCII header ({exc})") from None
    try:
        vals = np.array(" ".join(text[i:]).split(), dtype=np.float64)
    except ValueError as exc:
        raise ParseError(f"{path}: non-numeric grid value ({exc})") from None
    if vals.size != ncols * nrows:
        raise ParseError(f"{path}: expected {ncols * nrows} values, found {vals.size}")
    values = vals.reshape(nrows, ncols)[::-1].copy()
    return values, {"origin": (x0, y0), "cell_size": cs, "nodata": nodata}


def _numeric(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_friction_grid(path) -> FrictionGrid:
    values, h = read_esri_ascii(path)
    return FrictionGrid(h["origin"], h["cell_size"], values, h["nodata"])


def export_section_table(sections: Sequence[CrossSection], path) -> None:
    """CSV ``section_id,segment_start_station,segment_end_station,n`` in station order."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["section_id", "segment_start_station", "segment_end_station", "n"])
        for s in sections:
            for a, b, n in zip(s.segment_breaks, s.segment_ends, s.segment_n):
                wr.writerow([s.id, f"{a:.6f}", f"{b:.6f}", f"{n:.6f}"])


def export_section_summary(sections: Sequence[CrossSection], path) -> None:
    """CSV ``section_id,mean_n,mean_station_n,n_segments,outside_count``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["section_id", "mean_n", "mean_station_n", "n_segments", "outside_count"])
        for s in sections:
            wr.writerow([s.id, f"{s.mean_n:.6f}", f"{s.mean_station_n:.6f}",
                         len(s.segment_n), s.outside_count])


def read_sections_csv(path) -> List[CrossSection]:
    """Sections from CSV ``section_id,station,x,y[,elev]``; rows grouped by id."""
    groups: Dict[str, list] = {}
    with open(path, newline="") as fh:
        for line, r in enumerate(csv.DictReader(fh), start=2):
            try:
                elev = r.get("elev")
                row = (float(r["station"]), float(r["x"]), float(r["y"]),
                       float(elev) if elev not in (None, "") else None)
                groups.setdefault(r["section_id"], []).append(row)
            except (KeyError, ValueError, TypeError) as exc:
                raise ParseError(f"{path}: bad section row ({exc})", line=line) from None
    return [_section_from_rows(sid, rows) for sid, rows in groups.items()]


def _section_from_rows(sid, rows):
    rows = sorted(rows, key=lambda r: r[0])
    elev = [r[3] for r in rows]
    return CrossSection(
        sid,
        np.array([r[0] for r in rows]),
        xy=np.array([(r[1], r[2]) for r in rows]),
        elevations=None if any(e is None for e in elev) else np.array(elev),
    )


def read_sections_geojson(path) -> List[CrossSection]:
    """Sections from LineString features.

    Stations come from ``properties.stations`` when present, else from the
    cumulative plan distance along the line. A third coordinate is read as
    elevation.
    """
    doc = json.loads(Path(path).read_text())
    feats = doc["features"] if doc.get("type") == "FeatureCollection" else [doc]
    out = []
    for i, f in enumerate(feats):
        geom = f.get("geometry", {})
        if geom.get("type") != "LineString":
            raise ParseError(f"{path}: feature {i} is not a LineString")
        coords = np.asarray(geom["coordinates"], dtype=np.float64)
        props = f.get("properties") or {}
        sid = str(props.get("section_id", i))
        if "stations" in props:
            st = np.asarray(props["stations"], dtype=np.float64)
        else:
            st = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(coords[:, :2], axis=0).T))])
        elev = coords[:, 2] if coords.shape[1] > 2 else None
        out.append(CrossSection(sid, st, xy=coords[:, :2], elevations=elev))
    return out


def read_sections(path) -> List[CrossSection]:
    path = Path(path)
    if path.suffix.lower() in (".json", ".geojson"):
        return read_sections_geojson(path)
    return read_sections_csv(path)
