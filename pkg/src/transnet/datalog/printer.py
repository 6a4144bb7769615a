"""Render programs back to text the parser accepts."""

from __future__ import annotations

from .instance import Instance
from .syntax import Program, Section


def format_program(p: Program, header: str = "") -> str:
    lines: list[str] = []
    if header:
        lines.extend(f"% {h}" if h else "%" for h in header.splitlines())
    current: Section | None = None
    for d in p.decls:
        if d.section is not current:
            if d.section is None:
                raise ValueError(
                    f"relation {d.name} has no section but follows @{current.value} declarations"
                )
            lines.append(f"@{d.section.value}")
            current = d.section
        lines.append(str(d))
    if p.decls and p.rules:
        lines.append("")
    lines.extend(str(r) for r in p.rules)
    return "\n".join(lines) + "\n"


def format_instance(inst: Instance) -> str:
    return "".join(f"{f}.\n" for f in inst.facts())
