"""Tiny helper: expose a dataclass config as command-line flags."""

import argparse
from dataclasses import fields


def parse_into(cls, description):
    p = argparse.ArgumentParser(description=description)
    for f in fields(cls):
        kind = type(f.default)
        if kind is tuple:
            p.add_argument(f"--{f.name.replace('_', '-')}", nargs="+", type=type(f.default[0]),
                           default=f.default)
        elif kind is bool:
            p.add_argument(f"--{f.name.replace('_', '-')}", action="store_true", default=f.default)
        else:
            p.add_argument(f"--{f.name.replace('_', '-')}", type=kind, default=f.default)
    ns = p.parse_args()
    return cls(**{f.name: (tuple(v) if isinstance(v, list) else v)
                  for f, v in zip(fields(cls), (getattr(ns, f.name) for f in fields(cls)))})
