"""Hand-built instances shared by the CLI and the tests.

``motivation_jobs`` is the two-job example on a three-machine fabric whose
schedules give average CCT/JCT of 3.5/8 (coflow order) against 4/7 (metaflow
order). ``four_metaflow_job`` is the four-sender, two-receiver job with four
metaflows, built with exact ``Fraction`` sizes and loads.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, List, Tuple

from core.fabric import Fabric, new_fabric
from core.model import ComputeTask, Flow, JobDag, Metaflow, build_job

MOTIVATION_EXPECTED: Dict[str, Tuple[float, float]] = {
    "varys": (3.5, 8.0),
    "msa": (4.0, 7.0),
    "fair": (4.0, 7.5),
}


def _job(job: str, tasks, metaflows, flows, release: float = 0.0) -> JobDag:
    return build_job(job, release, tasks, metaflows, flows)


def motivation_jobs() -> Tuple[List[JobDag], Fabric]:
    j1 = _job(
        "J1",
        [ComputeTask("J1/c1", "J1", 0, 3.0, {"J1/mf1"})],
        [Metaflow("J1/mf1", "J1", frozenset({"J1/f1"}), "J1/c1")],
        [Flow("J1/f1", "J1", "J1/mf1", 1, 0, 3.0)],
    )
    j2 = _job(
        "J2",
        [
            ComputeTask("J2/c1", "J2", 2, 3.0, {"J2/mf1"}),
            ComputeTask("J2/c2", "J2", 2, 3.0, {"J2/mf2"}, {"J2/c1"}),
        ],
        [
            Metaflow("J2/mf1", "J2", frozenset({"J2/f1"}), "J2/c1"),
            Metaflow("J2/mf2", "J2", frozenset({"J2/f2"}), "J2/c2"),
        ],
        [
            Flow("J2/f1", "J2", "J2/mf1", 1, 2, 1.0),
            Flow("J2/f2", "J2", "J2/mf2", 0, 2, 3.0),
        ],
    )
    return [j1, j2], new_fabric(3, 1.0)


FOUR_METAFLOW_SIZES: Dict[str, Tuple[Fraction, Fraction]] = {
    "MF1": (Fraction(3), Fraction(5, 2)),
    "MF2": (Fraction(2), Fraction(7, 3)),
    "MF3": (Fraction(4), Fraction(1, 2)),
    "MF4": (Fraction(3, 2), Fraction(6)),
}

FOUR_METAFLOW_LOADS: Dict[str, Fraction] = {
    "c1": Fraction(7, 2),
    "c2": Fraction(5),
    "c3": Fraction(11, 4),
    "c4": Fraction(9, 2),
}


def four_metaflow_job() -> JobDag:
    """Senders on machines 0-3, receivers on 4 (c1, c3) and 5 (c2, c4).

    c1 <- MF1 {0->4, 1->4}; c2 <- MF2 {2->5, 3->5};
    c3 <- MF3 {2->4, 3->4} and c1; c4 <- MF4 {0->5, 1->5}, c3 and c2.
    """

    routes = {
        "MF1": ((0, 4), (1, 4), "c1"),
        "MF2": ((2, 5), (3, 5), "c2"),
        "MF3": ((2, 4), (3, 4), "c3"),
        "MF4": ((0, 5), (1, 5), "c4"),
    }
    flows, metaflows = [], []
    for mf, (first, second, consumer) in routes.items():
        ids = []
        for n, ((src, dst), size) in enumerate(zip((first, second), FOUR_METAFLOW_SIZES[mf]), start=1):
            flow_id = f"{mf}/f{n}"
            flows.append(Flow(flow_id, "F2", mf, src, dst, size))
            ids.append(flow_id)
        metaflows.append(Metaflow(mf, "F2", frozenset(ids), consumer))

    loads = FOUR_METAFLOW_LOADS
    tasks = [
        ComputeTask("c1", "F2", 4, loads["c1"], {"MF1"}),
        ComputeTask("c2", "F2", 5, loads["c2"], {"MF2"}),
        ComputeTask("c3", "F2", 4, loads["c3"], {"MF3"}, {"c1"}),
        ComputeTask("c4", "F2", 5, loads["c4"], {"MF4"}, {"c3", "c2"}),
    ]
    return _job("F2", tasks, metaflows, flows)


def four_metaflow_fabric() -> Fabric:
    return new_fabric(6, 1.0)
