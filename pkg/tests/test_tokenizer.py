import random
import re

from pwsec.syntax import SourceScript, lex, reconstruct, strip_comments, tokenize
from pwsec.syntax.tokenizer import TokenKind

GAP_RE = re.compile(r"^(?:[ \t\r\f\v\u00a0]|`\r?\n)*$")


def kinds(code: str) -> list[tuple[str, str]]:
    return [(t.kind.name, t.text) for t in tokenize(SourceScript.from_text(code))]


def test_command_string_comment():
    assert kinds('Write-Host "hi" # note') == [
        ("COMMAND_NAME", "Write-Host"),
        ("DOUBLE_QUOTE_STRING", '"hi"'),
        ("LINE_COMMENT", "# note"),
    ]


def test_block_comment_spans_lines():
    toks = tokenize(SourceScript.from_text("<# a\nb #>$x"))
    assert toks[0].kind == TokenKind.BLOCK_COMMENT
    assert toks[0].span[0] == 1 and toks[0].span[2] == 2
    assert toks[1].kind == TokenKind.VARIABLE and toks[1].text == "$x"


def test_here_string_single_token_three_lines():
    toks = tokenize(SourceScript.from_text('@"\nline\n"@'))
    assert len(toks) == 1
    tok = toks[0]
    assert tok.kind == TokenKind.HERE_STRING
    assert tok.span[0] == 1 and tok.span[2] == 3


def test_literal_here_string():
    toks = tokenize(SourceScript.from_text("@'\n$x is not a var\n'@"))
    assert [t.kind for t in toks] == [TokenKind.HERE_STRING]


def test_variable_scope_qualifiers():
    toks = tokenize(SourceScript.from_text("$global:Config $using:x $env:PATH $plain"))
    scopes = [(t.scope, t.name) for t in toks]
    assert scopes == [("global", "Config"), ("using", "x"), ("env", "PATH"), (None, "plain")]


def test_braced_variable():
    toks = tokenize(SourceScript.from_text("${global:my var}"))
    assert toks[0].kind == TokenKind.VARIABLE
    assert toks[0].scope == "global"
    assert toks[0].name == "my var"


def test_dash_operator_vs_parameter():
    toks = tokenize(SourceScript.from_text("Get-Item -Path x; $a -eq $b"))
    by_text = {t.text: t.kind for t in toks}
    assert by_text["-Path"] == TokenKind.PARAMETER
    assert by_text["-eq"] == TokenKind.OPERATOR


def test_single_char_aliases_in_command_position():
    toks = tokenize(SourceScript.from_text("gci | % { $_ } | ? { $_ }"))
    names = [t.text for t in toks if t.kind == TokenKind.COMMAND_NAME]
    assert names == ["gci", "%", "?"]


def test_keywords_contextual():
    toks = tokenize(SourceScript.from_text("if ($x) { return }\nGet-Item if"))
    kindmap = [(t.text, t.kind) for t in toks]
    assert (("if", TokenKind.KEYWORD)) in kindmap
    # 'if' as an argument is a bareword, not a keyword
    assert kindmap[-1] == ("if", TokenKind.IDENTIFIER)


def test_backtick_newline_is_line_continuation():
    code = "Get-Item `\n  -Path x\n"
    toks = tokenize(SourceScript.from_text(code))
    texts = [t.text for t in toks if t.kind != TokenKind.NEWLINE]
    assert texts == ["Get-Item", "-Path", "x"]
    assert reconstruct(SourceScript.from_text(code), toks) == code


def test_unterminated_string_flagged_to_eof():
    script = SourceScript.from_text("'never ends")
    toks, errors = lex(script)
    assert toks[0].kind == TokenKind.SINGLE_QUOTE_STRING
    assert toks[0].end == len(script.raw)
    assert errors and "unterminated" in errors[0].message


def test_unterminated_block_comment_flagged():
    _toks, errors = lex(SourceScript.from_text("<# open"))
    assert errors and "comment" in errors[0].message


def test_subexpression_inside_double_quotes():
    code = '"value: $(Get-Date -Format "u") end"'
    toks = tokenize(SourceScript.from_text(code))
    assert len(toks) == 1
    assert toks[0].kind == TokenKind.DOUBLE_QUOTE_STRING
    assert toks[0].text == code


ROUNDTRIP_SAMPLES = [
    "",
    "   \n\t\n",
    'Write-Host "hi" # note',
    "<# a\nb #>$x",
    '@"\nline\n"@',
    "gci | % { $_ }",
    "function Get-Items { param($a) }",
    "$a = @{ k = 'v'; n = 1..5 }",
    "ls C:\\temp\\*.log > out.txt 2>&1",
    "$x = 'it''s'",
    '"escaped `" quote"',
    "Invoke-Thing -Name:value @args",
    "[string]$typed = 'x'; [math]::Pi",
    "try { } catch [System.Exception] { } finally { }",
]


def test_roundtrip_on_samples():
    for code in ROUNDTRIP_SAMPLES:
        script = SourceScript.from_text(code)
        toks = tokenize(script)
        assert reconstruct(script, toks) == code, repr(code)
        # Gaps between tokens are whitespace or backtick-newline only.
        cursor = 0
        for tok in toks:
            assert GAP_RE.match(script.raw[cursor:tok.start]), repr(code)
            cursor = tok.end


def test_roundtrip_fuzz_printable():
    rng = random.Random(2024)
    alphabet = "abc $#'\"-|;{}()<>@`\n\t壽=%? ."
    for _ in range(300):
        code = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 60)))
        script = SourceScript.from_text(code)
        toks = tokenize(script)
        assert reconstruct(script, toks) == code, repr(code)


def test_fuzz_random_bytes_never_raise():
    rng = random.Random(99)
    for _ in range(300):
        data = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
        script = SourceScript.from_bytes(data)
        toks = tokenize(script)
        assert reconstruct(script, toks) == script.raw


def test_strip_comments_examples():
    assert strip_comments(SourceScript.from_text("$a = 1 # x")) == "$a = 1  "
    assert strip_comments(SourceScript.from_text('"#not a comment"')) == '"#not a comment"'
    assert strip_comments(SourceScript.from_text("<# c #>$a")) == " $a"


def test_strip_comments_idempotent():
    for code in ROUNDTRIP_SAMPLES:
        once = strip_comments(SourceScript.from_text(code))
        twice = strip_comments(SourceScript.from_text(once))
        assert once == twice, repr(code)
