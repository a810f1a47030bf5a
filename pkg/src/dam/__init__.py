"""Compiler and abstract machines for a call-by-value lambda calculus with
node annotations, from a single-stack machine up to a distributed one."""

from .bytecode import CodeTable, compile, deserialize, serialize
from .syntax import gen_term, parse_program, pretty

__version__ = "0.1.0"

__all__ = ["CodeTable", "compile", "deserialize", "serialize", "gen_term", "parse_program",
           "pretty"]
