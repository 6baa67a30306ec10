"""Workflow-structured N4SID subspace identification.

The identification pipeline (:mod:`fastsid.n4sid`) can run sequentially or as
a DAG of tasks (:mod:`fastsid.dagflow`) on a simulated cluster
(:mod:`fastsid.executor`), with the SVD stage split into column blocks and
merged pairwise (:mod:`fastsid.tsvd`).
"""
from .dagflow import WorkflowDag, build_sid_workflow, emit_template, parse_template, validate_dag
from .executor import identify_workflow, run_workflow, schedule
from .hankel import HankelSet, build_hankel_set, extract_YiUi
from .matstore import BlobKey, BlobStore, deserialize_matrix, serialize_matrix
from .n4sid import IdentificationResult, SidConfig, identify
from .plantsim import IoRecord, StateSpaceModel, ball_beam, gen_excitation, simulate
from .projection import oblique_project, orth_complement_project, orth_project, pinv
from .tsvd import SvdTriple, block_merge, do_merge_of_blocks, do_truncate, parallel_svd_by_cols, svd_dense

__version__ = "0.1.0"
