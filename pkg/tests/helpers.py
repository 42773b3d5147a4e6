from __future__ import annotations

from junction_asym.experiments import Workbench


def small_workbench(alpha=1, lateral_bc="neumann", plate="1", rods=("0",), convention="corrected",
                    h=0.01, mesh=0.03, reference_level=0, layer_level=1, rod=None, **extra):
    rod = rod or {"kind": "disk", "radius": 1.0, "gamma": 1.0, "length": 1.0}
    d = {
        "alpha": alpha,
        "h": h,
        "plate": {"kind": "disk", "radius": 1.0, "anchors": [[0.0, 0.0]], "lateral_bc": lateral_bc},
        "rods": [rod],
        "sources": {"plate": plate, "rods": list(rods)},
        "numerics": {"convention": convention, "plate_mesh_size": mesh, "reference_level": reference_level,
                     "layer_level": layer_level, "layer_truncation": [16.0, 16.0]},
    }
    d.update(extra)
    return Workbench.from_dict(d)
