"""Lightweight PowerShell lexing and structural fact extraction."""

from .parser import (
    Assignment,
    CatchBlock,
    CommandCall,
    Comparison,
    FunctionDecl,
    ParamDecl,
    ParseError,
    ScriptAst,
    ScriptBlockContext,
    parse,
)
from .source import OffsetOutOfRange, SourceScript
from .tokenizer import Token, TokenKind, lex, reconstruct, strip_comments, tokenize

__all__ = [
    "Assignment",
    "CatchBlock",
    "CommandCall",
    "Comparison",
    "FunctionDecl",
    "OffsetOutOfRange",
    "ParamDecl",
    "ParseError",
    "ScriptAst",
    "ScriptBlockContext",
    "SourceScript",
    "Token",
    "TokenKind",
    "lex",
    "parse",
    "reconstruct",
    "strip_comments",
    "tokenize",
]
