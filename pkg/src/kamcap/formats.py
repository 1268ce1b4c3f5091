"""Plain-text file formats shared by the command line stages.

freq_intervals::

    <omega_lo> <omega_hi>
    1.0 1.0

LEDGER v1: a header line ``LEDGER v1``, a line ``lmax K RI``, then records

    G  r i j lo hi          generator constants g_ij of step r
    H  r l s lo hi          explicit norm of block (l, s) after step r (r=0: H^(0))
    HH r l s lo hi          same, after the first half of step r (hat values)
    TAIL l lo hi            norms of harmonics dropped from psi^l terms
    M  lo hi                nondegeneracy bound m^(RI)
    X  r lo hi              translation xi^(r)

Endpoints are binary64 numbers written with repr(float) and parsed back
with float(), so a file round-trips bit-exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .interval import Interval


def write_freq(path, omega: Interval):
    with open(path, "w") as fh:
        fh.write(omega.to_text() + "\n")
        fh.write(Interval(1.0).to_text() + "\n")


def read_freq(path) -> Interval:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if len(rows) != 2:
        raise ValueError(f"{path}: freq_intervals needs exactly two lines")
    second = Interval.from_text(rows[1])
    if not (second.lo == 1.0 and second.hi == 1.0):
        raise ValueError(f"{path}: second frequency must be exactly [1, 1]")
    return Interval.from_text(rows[0])


@dataclass
class Ledger:
    """Explicit data exported by the normalizer."""

    lmax: int
    K: int
    R_I: int
    g: dict = field(default_factory=dict)        # (r, i, j) -> Interval
    h: dict = field(default_factory=dict)        # (r, l, s) -> Interval
    hat: dict = field(default_factory=dict)      # (r, l, s) -> Interval
    tail: dict = field(default_factory=dict)     # l -> Interval
    xi: dict = field(default_factory=dict)       # r -> Interval
    m: Interval | None = None

    def write(self, path):
        lines = ["LEDGER v1", f"{self.lmax} {self.K} {self.R_I}"]
        for (r, i, j), v in sorted(self.g.items()):
            lines.append(f"G {r} {i} {j} {v.to_text()}")
        for (r, l, s), v in sorted(self.h.items()):
            lines.append(f"H {r} {l} {s} {v.to_text()}")
        for (r, l, s), v in sorted(self.hat.items()):
            lines.append(f"HH {r} {l} {s} {v.to_text()}")
        for r, v in sorted(self.xi.items()):
            lines.append(f"X {r} {v.to_text()}")
        for l, v in sorted(self.tail.items()):
            lines.append(f"TAIL {l} {v.to_text()}")
        if self.m is not None:
            lines.append(f"M {self.m.to_text()}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "Ledger":
        with open(path) as fh:
            rows = [ln.split() for ln in fh if ln.strip()]
        if not rows or rows[0] != ["LEDGER", "v1"]:
            raise ValueError(f"{path}: not a LEDGER v1 file")
        lmax, K, R_I = (int(x) for x in rows[1])
        led = cls(lmax, K, R_I)
        for n, p in enumerate(rows[2:], start=3):
            tag = p[0]
            try:
                if tag == "G":
                    led.g[(int(p[1]), int(p[2]), int(p[3]))] = Interval.from_text(" ".join(p[4:6]))
                elif tag in ("H", "HH"):
                    key = (int(p[1]), int(p[2]), int(p[3]))
                    (led.h if tag == "H" else led.hat)[key] = Interval.from_text(" ".join(p[4:6]))
                elif tag == "X":
                    led.xi[int(p[1])] = Interval.from_text(" ".join(p[2:4]))
                elif tag == "TAIL":
                    led.tail[int(p[1])] = Interval.from_text(" ".join(p[2:4]))
                elif tag == "M":
                    led.m = Interval.from_text(" ".join(p[1:3]))
                else:
                    raise ValueError(f"unknown record {tag!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{n}: {exc}") from exc
        return led


def write_certificate(path, entries: dict, verdict: str, failing=None, notes=()):
    lines = ["CERTIFICATE v1", f"verdict {verdict}"]
    if failing:
        lines.append(f"failing {failing}")
    for k, v in entries.items():
        if isinstance(v, Interval):
            lines.append(f"{k} {v.to_text()}")
        else:
            lines.append(f"{k} {v}")
    for n in notes:
        lines.append(f"# {n}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_certificate(path) -> dict:
    """Key/value view of a certificate; values stay strings, notes are
    collected under ``notes``."""
    out = {"notes": []}
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "CERTIFICATE v1":
        raise ValueError(f"{path}: not a CERTIFICATE v1 file")
    for line in lines[1:]:
        if line.startswith("#"):
            out["notes"].append(line[1:].strip())
        elif line.strip():
            k, _, v = line.partition(" ")
            out[k] = v.strip()
    return out
