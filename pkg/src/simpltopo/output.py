"""Output artifacts: convergence CSV, grayscale density PGM, legacy VTK.

All writers are deterministic: identical inputs produce byte-identical files.
Floats are written with 17 significant digits so reruns round-trip exactly.
"""

import numpy as np

__all__ = ["write_convergence_csv", "write_density_image", "write_vtk"]

CSV_HEADER = "iter,compliance,stationarity,step,ls_trials,volume_error"


def _fmt(x):
    return format(float(x), ".17g")


def write_convergence_csv(report, path):
    """One row per iteration, including the initial evaluation (row 0)."""
    lines = [CSV_HEADER]
    for rec in report.history:
        lines.append(",".join([
            str(rec.k), _fmt(rec.compliance), _fmt(rec.stationarity),
            _fmt(rec.step), str(rec.ls_trials), _fmt(rec.volume_error)]))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_density_image(rho, mesh, path):
    """Binary PGM (P5): width nx, height ny, solid material dark.

    Pixel value is round(255 * (1 - rho)) with halves rounded away from zero;
    rows run top to bottom.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (mesh.num_elements,):
        raise ValueError(f"expected {mesh.num_elements} element values, got {rho.shape}")
    gray = np.floor(255.0 * (1.0 - rho) + 0.5)
    pixels = np.clip(gray, 0, 255).astype(np.uint8).reshape(mesh.ny, mesh.nx)[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mesh.nx} {mesh.ny}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return path


def write_vtk(fields, mesh, path, title="simpltopo run"):
    """Legacy ASCII VTK structured grid.

    ``fields`` maps names to arrays; element-length arrays become CELL_DATA
    scalars, node-length arrays POINT_DATA scalars, and 2*node-length arrays
    POINT_DATA vectors (z component zero).
    """
    ne, nn = mesh.num_elements, mesh.num_nodes
    cell_scalars, point_scalars, point_vectors = {}, {}, {}
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape == (ne,):
            cell_scalars[name] = values
        elif values.shape == (nn,):
            point_scalars[name] = values
        elif values.shape == (2 * nn,):
            point_vectors[name] = values
        else:
            raise ValueError(f"field {name!r} has shape {values.shape}, expected "
                             f"({ne},), ({nn},) or ({2 * nn},)")

    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_GRID",
        f"DIMENSIONS {mesh.nx + 1} {mesh.ny + 1} 1",
        f"POINTS {nn} double",
    ]
    for x, y in mesh.nodes:
        lines.append(f"{_fmt(x)} {_fmt(y)} 0")
    if point_scalars or point_vectors:
        lines.append(f"POINT_DATA {nn}")
        for name, values in point_scalars.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
        for name, values in point_vectors.items():
            lines.append(f"VECTORS {name} double")
            for i in range(nn):
                lines.append(f"{_fmt(values[2 * i])} {_fmt(values[2 * i + 1])} 0")
    if cell_scalars:
        lines.append(f"CELL_DATA {ne}")
        for name, values in cell_scalars.items():
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
