"""Escaping and small text formats shared by the CLI and reports.

Passwords are raw bytes but our files are newline-delimited text, so a
reversible escape keeps every byte representable: backslash becomes
\\x5c and any byte outside printable ASCII (0x20..0x7e) becomes \\xHH.
In particular a newline is written as \\x0a.
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Tuple

from .errors import FormatError


def escape_bytes(password: bytes) -> str:
    out = []
    for b in password:
        if b == 0x5C:
            out.append("\\x5c")
        elif 0x20 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02x}")
    return "".join(out)


def unescape_bytes(line: str) -> bytes:
    out = bytearray()
    i = 0
    while i < len(line):
        c = line[i]
        if c == "\\":
            if line[i + 1:i + 2] != "x" or i + 4 > len(line):
                raise FormatError(f"bad escape at column {i} in {line!r}")
            try:
                out.append(int(line[i + 2:i + 4], 16))
            except ValueError:
                raise FormatError(f"bad hex escape at column {i}") from None
            i += 4
        else:
            b = ord(c)
            if b > 0x7E or b < 0x20:
                raise FormatError(f"raw non-printable byte at column {i}")
            out.append(b)
            i += 1
    return bytes(out)


def write_password_lines(path, passwords: Iterable[bytes]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for pw in passwords:
            fh.write(escape_bytes(pw) + "\n")


def read_password_lines(path) -> List[bytes]:
    with open(path, "r", encoding="ascii") as fh:
        return [unescape_bytes(line.rstrip("\n")) for line in fh if line.rstrip("\n")]


def write_kv(path, pairs: Iterable[Tuple[str, object]]) -> None:
    """Flat key=value text, one pair per line, insertion order preserved."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in pairs:
            fh.write(f"{key}={value}\n")


def read_kv(path) -> Dict[str, str]:
    out: Dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FormatError(f"{path}:{lineno}: expected key=value")
            out[key.strip()] = value.strip()
    return out
