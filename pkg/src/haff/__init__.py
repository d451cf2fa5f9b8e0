"""Failover with state replication for SvcLang services."""

from haff.aslt import AsltNode, AsltTree, Kind, splice, structurally_equal
from haff.meta import Failoverpoint, Ident, SetRef, VarSetDef, parse_meta
from haff.parser import code_to_aslt
from haff.printer import aslt_to_code

__all__ = [
    "AsltNode", "AsltTree", "Kind", "splice", "structurally_equal",
    "Failoverpoint", "Ident", "SetRef", "VarSetDef", "parse_meta",
    "code_to_aslt", "aslt_to_code",
]
