"""Plot-data CSVs and SVG figures for clusters, elbow curves, and reference overlays.

Every figure has a bit-exact CSV twin: the render functions first write the
series CSV, then draw the SVG from the re-read CSV, so the figure is derived
from the CSV and never the reverse. Output is deterministic: identical inputs
yield byte-identical CSVs, and SVGs identical modulo the version comment.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from html import escape
from pathlib import Path

from loadshape import __version__
from loadshape.cluster import ClusteringResult, ElbowReport
from loadshape.errors import MissingFileError, ReferenceFileError
from loadshape.ingest import HOURS_PER_DAY
from loadshape.profiles import DayProfile, distance

ROLES = ("member", "centroid", "reference")

_ROLE_STYLE = {
    "member": 'fill="none" stroke="#3a3a3a" stroke-width="1" stroke-opacity="0.55"',
    "centroid": 'fill="none" stroke="#d62728" stroke-width="2.5"',
    "reference": 'fill="none" stroke="#1f77b4" stroke-width="2" stroke-dasharray="6,3"',
}


@dataclass(frozen=True)
class PlotSeries:
    """One named line on a panel."""

    name: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if len(self.x) != len(self.y):
            raise ValueError(f"series {self.name!r}: {len(self.x)} x values vs {len(self.y)} y values")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValueError(f"series {self.name!r}: x must be strictly increasing")


@dataclass(frozen=True)
class ReferenceProfileSet:
    """User-supplied reference profiles, resampled to hourly resolution."""

    profiles: dict[str, tuple[float, ...]]


def write_series_csv(series_list, path) -> Path:
    """Write plot data as CSV with header series,role,x,y (repr floats, exact)."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series", "role", "x", "y"])
        for series in series_list:
            for x, y in zip(series.x, series.y):
                writer.writerow([series.name, series.role, repr(float(x)), repr(float(y))])
    return path


def read_series_csv(path) -> list[PlotSeries]:
    """Reload plot data written by write_series_csv, preserving series order."""
    order: list[tuple[str, str]] = []
    points: dict[tuple[str, str], list[tuple[float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["series"], row["role"])
            if key not in points:
                points[key] = []
                order.append(key)
            points[key].append((float(row["x"]), float(row["y"])))
    out = []
    for name, role in order:
        xs, ys = zip(*points[(name, role)])
        out.append(PlotSeries(name, tuple(xs), tuple(ys), role))
    return out


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_svg(series_list, path, title: str, x_label: str, y_label: str,
               annotations=(), vlines=()) -> Path:
    """Draw series as a single deterministic SVG panel.

    vlines marks x positions with dashed vertical rules (e.g. the suggested
    cluster count on an elbow curve).
    """
    width, height = 640, 420
    left, right, top, bottom = 62.0, 16.0, 46.0, 52.0
    plot_w = width - left - right
    plot_h = height - top - bottom
    xs = [x for s in series_list for x in s.x]
    ys = [y for s in series_list for y in s.y]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or max(0.5, abs(y_hi) * 0.05, 0.5)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return top + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- loadshape {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.2f}" y="24" font-family="sans-serif" font-size="15" '
        f'text-anchor="middle">{escape(title)}</text>',
    ]
    # axes
    lines.append(
        f'<rect x="{left:.2f}" y="{top:.2f}" width="{plot_w:.2f}" height="{plot_h:.2f}" '
        'fill="none" stroke="#888" stroke-width="1"/>'
    )
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        lines.append(f'<line x1="{x:.2f}" y1="{top + plot_h:.2f}" x2="{x:.2f}" y2="{top + plot_h + 5:.2f}" stroke="#888"/>')
        lines.append(
            f'<text x="{x:.2f}" y="{top + plot_h + 18:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="middle">{tick:g}</text>'
        )
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        lines.append(f'<line x1="{left - 5:.2f}" y1="{y:.2f}" x2="{left:.2f}" y2="{y:.2f}" stroke="#888"/>')
        lines.append(
            f'<text x="{left - 8:.2f}" y="{y + 4:.2f}" font-family="sans-serif" '
            f'font-size="11" text-anchor="end">{tick:.4g}</text>'
        )
    lines.append(
        f'<text x="{left + plot_w / 2:.2f}" y="{height - 14:.2f}" font-family="sans-serif" '
        f'font-size="12" text-anchor="middle">{escape(x_label)}</text>'
    )
    lines.append(
        f'<text x="16" y="{top + plot_h / 2:.2f}" font-family="sans-serif" font-size="12" '
        f'text-anchor="middle" transform="rotate(-90 16 {top + plot_h / 2:.2f})">{escape(y_label)}</text>'
    )
    for x in vlines:
        lines.append(
            f'<line x1="{px(x):.2f}" y1="{top:.2f}" x2="{px(x):.2f}" y2="{top + plot_h:.2f}" '
            'stroke="#2ca02c" stroke-width="1.5" stroke-dasharray="4,3"/>'
        )
    # draw members first so centroids/references sit on top
    for role in ROLES:
        for series in series_list:
            if series.role != role:
                continue
            pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(series.x, series.y))
            lines.append(f'<polyline points="{pts}" {_ROLE_STYLE[series.role]}><title>{escape(series.name)}</title></polyline>')
    for i, note in enumerate(annotations):
        lines.append(
            f'<text x="{left + 8:.2f}" y="{top + 16 + 14 * i:.2f}" font-family="sans-serif" '
            f'font-size="11" fill="#2ca02c">{escape(note)}</text>'
        )
    lines.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _emit_panel(series_list, out_dir, run_id, panel, title, x_label, y_label,
                annotations=(), vlines=()):
    """Write the CSV twin, then render the SVG from the re-read CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = write_series_csv(series_list, out_dir / f"{run_id}_{panel}.csv")
    reloaded = read_series_csv(csv_path)
    svg_path = render_svg(reloaded, out_dir / f"{run_id}_{panel}.svg", title, x_label, y_label,
                          annotations=annotations, vlines=vlines)
    return csv_path, svg_path


def cluster_panels(result: ClusteringResult, profiles):
    """Per-cluster series: every member profile plus the centroid."""
    if len(profiles) != len(result.assignments):
        raise ValueError(f"{len(profiles)} profiles for {len(result.assignments)} assignments")
    hours = tuple(float(h) for h in range(HOURS_PER_DAY))
    panels = []
    for j, centroid in enumerate(result.centroids):
        series = []
        for profile, assigned in zip(profiles, result.assignments):
            if assigned != j:
                continue
            name = profile.property_id if profile.day_set == "all" else f"{profile.property_id}:{profile.day_set}"
            series.append(PlotSeries(name, hours, tuple(profile.values), "member"))
        series.append(PlotSeries(f"cluster{j}", hours, tuple(centroid.values), "centroid"))
        panels.append((f"cluster{j}", series))
    return panels


def render_cluster_panels(result: ClusteringResult, profiles, out_dir, run_id: str) -> list[Path]:
    """One SVG + CSV pair per cluster, members in grey and the centroid in red."""
    units = result.centroids[0].units
    y_label = "kWh" if units == "kwh" else "share of daily total"
    paths = []
    for panel, series in cluster_panels(result, profiles):
        n_members = sum(1 for s in series if s.role == "member")
        csv_path, svg_path = _emit_panel(
            series, out_dir, run_id, panel,
            title=f"{panel} ({n_members} profiles)", x_label="hour of day", y_label=y_label,
        )
        paths.extend([csv_path, svg_path])
    return paths


def render_elbow(report: ElbowReport, out_dir, run_id: str) -> list[Path]:
    """WCSS-vs-k curve with the suggested elbow marked."""
    if len(report.entries) < 3:
        raise ValueError(f"elbow plot needs at least 3 entries, got {len(report.entries)}")
    ks = tuple(float(k) for k, _ in report.entries)
    ws = tuple(w for _, w in report.entries)
    series = [PlotSeries("wcss", ks, ws, "member")]
    annotations = [f"suggested_k={report.suggested_k}"]
    if report.degenerate:
        annotations.append("degenerate curve (flat WCSS)")
    csv_path, svg_path = _emit_panel(
        series, out_dir, run_id, "elbow",
        title="within-cluster sum of squares by cluster count",
        x_label="number of clusters", y_label="total WCSS",
        annotations=annotations, vlines=(float(report.suggested_k),),
    )
    return [csv_path, svg_path]


def read_reference_csv(path) -> ReferenceProfileSet:
    """Load reference profiles: name,h00..h23 (hourly) or name,p00..p47 (half-hourly).

    Half-hourly profiles are resampled to hourly by averaging each pair.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"reference file not found: {path}")
    hourly_cols = [f"h{h:02d}" for h in range(HOURS_PER_DAY)]
    half_cols = [f"p{i:02d}" for i in range(2 * HOURS_PER_DAY)]
    profiles: dict[str, tuple[float, ...]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReferenceFileError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if header == ["name", *hourly_cols]:
            points = HOURS_PER_DAY
        elif header == ["name", *half_cols]:
            points = 2 * HOURS_PER_DAY
        else:
            raise ReferenceFileError(f"{path}: header must be name,h00..h23 or name,p00..p47")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != points + 1:
                raise ReferenceFileError(f"{path}:{lineno}: expected {points + 1} cells, got {len(row)}")
            name = row[0]
            try:
                values = [float(c) for c in row[1:]]
            except ValueError as exc:
                raise ReferenceFileError(f"{path}:{lineno}: {exc}")
            if any(v < 0 for v in values):
                raise ReferenceFileError(f"{path}:{lineno}: negative reading")
            if points == 2 * HOURS_PER_DAY:
                values = [(values[2 * h] + values[2 * h + 1]) / 2.0 for h in range(HOURS_PER_DAY)]
            if sum(values) <= 0:
                raise ReferenceFileError(f"{path}:{lineno}: profile {name!r} is all zero")
            if name in profiles:
                raise ReferenceFileError(f"{path}:{lineno}: duplicate profile name {name!r}")
            profiles[name] = tuple(values)
    if not profiles:
        raise ReferenceFileError(f"{path}: no profiles")
    return ReferenceProfileSet(profiles)


def overlay_series(centroids, refs: ReferenceProfileSet):
    """Centroid and reference series plus shape-mode centroid x reference distances."""
    hours = tuple(float(h) for h in range(HOURS_PER_DAY))
    series = []
    for centroid in centroids:
        series.append(PlotSeries(centroid.property_id, hours, tuple(centroid.values), "centroid"))
    for name in sorted(refs.profiles):
        series.append(PlotSeries(name, hours, refs.profiles[name], "reference"))
    distances = []
    for centroid in centroids:
        for name in sorted(refs.profiles):
            ref_profile = DayProfile(refs.profiles[name], "kwh", name, "reference")
            distances.append((centroid.property_id, name, distance(centroid, ref_profile, mode="shape")))
    return series, distances


def overlay_reference(centroids, refs: ReferenceProfileSet, out_dir, run_id: str) -> list[Path]:
    """Overlay centroids against reference profiles; also writes the distance table."""
    series, distances = overlay_series(centroids, refs)
    csv_path, svg_path = _emit_panel(
        series, out_dir, run_id, "overlay",
        title="cluster centroids vs reference profiles",
        x_label="hour of day", y_label="kWh",
    )
    dist_path = Path(out_dir) / f"{run_id}_overlay_distances.csv"
    with open(dist_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["centroid", "reference", "shape_distance"])
        for centroid_name, ref_name, value in distances:
            writer.writerow([centroid_name, ref_name, repr(value)])
    return [csv_path, svg_path, dist_path]
