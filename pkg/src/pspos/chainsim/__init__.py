"""Proof-of-stake chain simulator whose block signatures use puncturable keys."""

from .chain import (BAD_LINK, BAD_SIG, BAD_SLOT_ORDER, BAD_VRF, NOT_ELIGIBLE, REASONS, Block,
                    Chain, Genesis, StakeEntry, Validator, select_chain, slot_bytes,
                    validate_block, vrf_input)
from .lrsl import AttackReport, ScenarioError, lrsl_scenario
from .sim import (AdversaryScript, ConfigError, SimConfig, Simulation, SimReport, Stakeholder,
                  make_block, run_simulation)
from .vrf import VRFKey, VRFRegistry, eligible, threshold, vrf_eval, vrf_keygen

__all__ = [
    "BAD_LINK", "BAD_SIG", "BAD_SLOT_ORDER", "BAD_VRF", "NOT_ELIGIBLE", "REASONS",
    "Block", "Chain", "Genesis", "StakeEntry", "Validator", "select_chain", "slot_bytes",
    "validate_block", "vrf_input", "AttackReport", "ScenarioError", "lrsl_scenario",
    "AdversaryScript", "ConfigError", "SimConfig", "Simulation", "SimReport", "Stakeholder",
    "make_block", "run_simulation", "VRFKey", "VRFRegistry", "eligible", "threshold",
    "vrf_eval", "vrf_keygen",
]
