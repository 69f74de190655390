"""Simulator for multi-agent quantum thought experiments."""

from .agents import AgentBrain, Claim, Hypothesis, InferenceTable, Verdict, build_brain
from .errors import ProtocolError, QThoughtError, TrustDenied
from .experiments import FIXTURES, load_fixture
from .interpretations import (
    BranchTree,
    Collapse,
    Interpretation,
    NeoCopenhagen,
    collapse_inference,
    collapse_run,
    compute_inference_table,
    compute_tables,
    get_interpretation,
    register_interpretation,
)
from .logic import (
    ContradictionReport,
    InferenceChain,
    TrustStructure,
    check_consistency,
    combine,
    derive_chain,
    identity_table,
)
from .protocol import Protocol, parse
from .runtime import RunRecord, execute, exact, final_state, repeat, run_protocol

__version__ = "0.1.0"

__all__ = [
    "AgentBrain",
    "BranchTree",
    "Claim",
    "Collapse",
    "ContradictionReport",
    "FIXTURES",
    "Hypothesis",
    "InferenceChain",
    "InferenceTable",
    "Interpretation",
    "NeoCopenhagen",
    "Protocol",
    "ProtocolError",
    "QThoughtError",
    "RunRecord",
    "TrustDenied",
    "TrustStructure",
    "Verdict",
    "build_brain",
    "check_consistency",
    "collapse_inference",
    "collapse_run",
    "combine",
    "compute_inference_table",
    "compute_tables",
    "derive_chain",
    "exact",
    "execute",
    "final_state",
    "get_interpretation",
    "identity_table",
    "load_fixture",
    "parse",
    "register_interpretation",
    "repeat",
    "run_protocol",
]
