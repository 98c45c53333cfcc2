"""
Serialisation of trajectories, ensembles, verification reports and run
manifests. Numbers are written with 17 significant digits.
"""
import csv
import json
import logging
import os
from typing import Any, Dict, List

import numpy as np

from .dynamics import InteractionSystem, Trajectory, run_seed_sequence
from .harness import EnsembleStats
from .graph_core import bipartiteness
from .spectral import LimitPrediction, drift_system

logger = logging.getLogger(__name__)

TRAJECTORY_HEADER = ("step", "agent", "z")
ENSEMBLE_HEADER = ("run", "agent", "z_final")


def fmt(value: float) -> str:
    return format(float(value), ".17g")


def to_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write_text(path: str, text: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    logger.debug(f"Wrote {path}")


def write_trajectory_csv(trajectory: Trajectory, path: str):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for step, state in zip(trajectory.steps, trajectory.states):
            for agent, z in enumerate(state):
                writer.writerow((int(step), agent, fmt(z)))
    logger.debug(f"Wrote {path}")


def trajectory_dict(trajectory: Trajectory) -> Dict[str, Any]:
    data = {
        "seed": trajectory.seed,
        "run_index": trajectory.run_index,
        "steps": [int(s) for s in trajectory.steps],
        "states": [[float(fmt(z)) for z in row] for row in trajectory.states],
    }
    if trajectory.increments is not None:
        data["increments"] = [
            [None if np.isnan(x) else float(fmt(x)) for x in row]
            for row in trajectory.increments
        ]
    return data


def write_trajectory(trajectory: Trajectory, out_dir: str, output_format: str) -> str:
    path = os.path.join(out_dir, f"run_{trajectory.run_index}.{output_format}")
    if output_format == "csv":
        write_trajectory_csv(trajectory, path)
    else:
        _write_text(path, to_json(trajectory_dict(trajectory)))
    return path


def write_ensemble(stats: EnsembleStats, out_dir: str, output_format: str) -> str:
    path = os.path.join(out_dir, f"ensemble.{output_format}")
    if output_format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(ENSEMBLE_HEADER)
            for run, finals in enumerate(stats.finals):
                for agent, z in enumerate(finals):
                    writer.writerow((run, agent, fmt(z)))
    else:
        _write_text(
            path,
            to_json(
                {
                    "seed": stats.master_seed,
                    "n_steps": stats.n_steps,
                    "finals": [
                        [float(fmt(z)) for z in row] for row in stats.finals
                    ],
                }
            ),
        )
    logger.debug(f"Wrote {path}")
    return path


def write_json(data: Dict[str, Any], out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    _write_text(path, to_json(data))
    return path


def manifest(
    config_hash: str, master_seed: int, n_runs: int, files: List[str]
) -> Dict[str, Any]:
    runs = []
    for index in range(n_runs):
        sequence = run_seed_sequence(master_seed, index)
        runs.append(
            {
                "run_index": index,
                "entropy": int(sequence.entropy),
                "spawn_key": list(sequence.spawn_key),
            }
        )
    return {
        "config_hash": config_hash,
        "master_seed": master_seed,
        "n_runs": n_runs,
        "runs": runs,
        "files": [os.path.basename(f) for f in files],
    }


def write_manifest(data: Dict[str, Any], out_dir: str) -> str:
    return write_json(data, out_dir, "manifest.json")


# region Structure reports
def _array(values) -> List[float]:
    return [float(fmt(v)) for v in np.ravel(values)]


def prediction_dict(prediction: LimitPrediction) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "class_id": f"{prediction.class_key[0]}.{prediction.class_key[1]}",
        "members": list(prediction.members),
        "kind": prediction.kind.value,
        "attitude": prediction.attitude.value if prediction.attitude else None,
    }
    if prediction.partition is not None:
        data["partition"] = [list(side) for side in prediction.partition]
    if prediction.value is not None:
        data["value"] = _array(prediction.value)
    if prediction.constant is not None:
        data["constant"] = _array(prediction.constant)
        data["k_inverse_applied"] = [
            _array(row) for row in prediction.k_inverse_applied
        ]
        data["dependencies"] = [
            {
                "class_id": f"{source[0]}.{source[1]}",
                "coupling": [_array(row) for row in coupling],
            }
            for source, coupling in prediction.dependencies
        ]
    return data


def structure_report(system: InteractionSystem) -> Dict[str, Any]:
    """Classes, levels, bipartiteness, periods, drift diagnostics, predictions."""
    decomposition = system.decomposition
    row_sums = system.matrix.row_sums
    classes = []
    for key, cls in decomposition.classes():
        members = list(cls.members)
        report = bipartiteness(cls)
        drift = drift_system(
            decomposition.diagonal_block(key),
            system.class_attitudes[key],
            row_sums=row_sums[members],
            forcing=system.forcing_limits[members],
            class_key=key,
        )
        diagnostics = drift.diagnostics
        classes.append(
            {
                "class_id": f"{key[0]}.{key[1]}",
                "level": key[0],
                "members": members,
                "attitude": system.class_attitudes[key].value,
                "stubborn": [a for a in members if a in system.stubborn],
                "bipartite": report.is_bipartite,
                "partition": (
                    [list(side) for side in report.partition]
                    if report.partition
                    else None
                ),
                "period": report.period,
                "drift": {
                    "K": [_array(row) for row in drift.K],
                    "c": _array(drift.c),
                    "diagonally_dominant": diagnostics.diagonally_dominant,
                    "strictly_dominant_rows": [
                        members[i] for i in diagnostics.strictly_dominant_rows
                    ],
                    "stability_certificate": diagnostics.stability_certificate,
                    "invertibility_certificate": diagnostics.invertibility_certificate,
                    "invertible": diagnostics.invertible,
                    "bipartite_singular": diagnostics.bipartite_singular,
                    "table_variant_invertible": diagnostics.table_variant_invertible,
                    "sign_discrepancy": diagnostics.sign_discrepancy,
                },
                "prediction": prediction_dict(system.predictions[key]),
            }
        )
    return {
        "n_agents": system.n_agents,
        "n_levels": decomposition.n_levels,
        "levels": [
            [f"{level}.{index}" for index in range(len(level_classes))]
            for level, level_classes in enumerate(decomposition.levels)
        ],
        "classes": classes,
    }


# endregion
