"""SwarmSTL: formulas over generalized moments, robustness, and per-agent confidence."""
from .formula import (AlwaysPast, And, Atom, Event, EventuallyPast, FalseF, Formula,
                      FormulaError, Implies, Not, Or, Since, TrueF, Until, atoms, events, history_depth,
                      is_nnf, is_past_time, to_nnf)
from .monitor import MonitorOutput, OnlineMonitor, TraceRow, monitor_online, trace_rows
from .parser import ParseError, parse, parse_definitions, parse_formula_file
from .semantics import (InsufficientHistory, MomentTrace, MonitorResult, confidence,
                        confidence_series, evaluate_trace, robustness, robustness_series,
                        satisfies)

__all__ = [
    "AlwaysPast", "And", "Atom", "Event", "EventuallyPast", "FalseF", "Formula",
    "FormulaError", "Implies", "Not", "Or", "Since", "TrueF", "Until", "atoms", "events",
    "history_depth",
    "is_nnf", "is_past_time", "to_nnf", "MonitorOutput", "OnlineMonitor", "TraceRow",
    "monitor_online", "trace_rows", "ParseError", "parse", "parse_definitions",
    "parse_formula_file", "InsufficientHistory", "MomentTrace", "MonitorResult",
    "confidence", "confidence_series", "evaluate_trace", "robustness",
    "robustness_series", "satisfies",
]
