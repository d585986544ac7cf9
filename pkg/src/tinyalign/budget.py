"""Exact parameter / MAdd / FLOP accounting for conv layer stacks.

Convention: FLOPs are multiply-accumulates (MACs); MAdd counts the multiply
and the add separately, so MAdd == 2 * FLOPs for conv/linear layers.
All counts are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

from .layers import ConvSpec


@dataclass(frozen=True)
class ComputeBudget:
    total_params: int
    total_madd: int
    total_flops: int
    model_bytes: int = 0

    def with_model_bytes(self, nbytes: int) -> "ComputeBudget":
        return ComputeBudget(self.total_params, self.total_madd, self.total_flops, nbytes)


def conv_params(spec: ConvSpec) -> int:
    k2 = spec.kernel * spec.kernel
    mult = k2 * (spec.in_channels // spec.groups) * spec.out_channels
    return mult + (spec.out_channels if spec.bias else 0)


def conv_macs(spec: ConvSpec, out_h: int, out_w: int) -> int:
    k2 = spec.kernel * spec.kernel
    mult = k2 * (spec.in_channels // spec.groups) * spec.out_channels
    return mult * out_h * out_w


def account(layers: list[tuple[ConvSpec, int, int]]) -> ComputeBudget:
    """Budget for a list of (spec, out_h, out_w) conv layers."""
    params = 0
    flops = 0
    for spec, oh, ow in layers:
        params += conv_params(spec)
        flops += conv_macs(spec, oh, ow)
    return ComputeBudget(total_params=params, total_madd=2 * flops, total_flops=flops)


def _millions(n: int) -> str:
    return f"{n / 1e6:.2f}M"


def format_report(budget: ComputeBudget, latency_ms: float | None = None,
                  latency_label: str = "host") -> str:
    rows = [
        ("Total params", f"{budget.total_params:,}"),
        ("Total MAdd", _millions(budget.total_madd)),
        ("Total Flops", _millions(budget.total_flops)),
        ("Model Size", f"{budget.model_bytes / 1024:.0f}KB"),
    ]
    if latency_ms is not None:
        rows.append((f"Inference Time ({latency_label})", f"{latency_ms:.1f}ms"))
    width = max(len(name) for name, _ in rows) + 2
    return "\n".join(f"{name:<{width}}{value}" for name, value in rows)
