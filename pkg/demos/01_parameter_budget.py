"""Where Xception spends its parameters and multiply-accumulates.

Builds the full 299x299 graph, groups the cost by stage, and compares a
separable convolution with the regular convolution it replaces.
"""

from collections import defaultdict

from xsep.arch import build_xception, infer_shapes, node_macs, node_params, structure
from xsep.conv import conv_macs, separable_param_count

spec = build_xception()
shapes = infer_shapes(spec)

# Modules 1-4 form the entry flow, 5-12 the middle flow, 13-14 the exit flow.
def stage(node, index):
    if node.kind == "dense":
        return "classifier"
    m = node.get("module")
    if m is None:
        # shortcut projections and their BN belong to the enclosing module
        m = next(spec.nodes[j].get("module") for j in range(index, 0, -1)
                 if spec.nodes[j].get("module") is not None)
    return "entry" if m <= 4 else "middle" if m <= 12 else "exit"

params, macs = defaultdict(int), defaultdict(int)
for i, (node, shape) in enumerate(zip(spec.nodes, shapes)):
    p, m = node_params(node)[0], node_macs(node, shape)
    if p or m:
        key = stage(node, i)
        params[key] += p
        macs[key] += m

total_p, total_m = sum(params.values()), sum(macs.values())
print(f"{'stage':<11}{'params':>12}{'share':>8}{'MACs':>16}{'share':>8}")
for key in ("entry", "middle", "exit", "classifier"):
    print(f"{key:<11}{params[key]:>12,}{params[key] / total_p:>8.1%}"
          f"{macs[key]:>16,}{macs[key] / total_m:>8.1%}")
print(f"{'total':<11}{total_p:>12,}{'':>8}{total_m:>16,}")

s = structure(spec)
print(f"\n{s.conv_layers} conv layers in {s.modules} modules, "
      f"{s.residual_connections} residual joins ({s.projection_shortcuts} with projections)")

# A middle-flow layer: 728 -> 728 channels, 3x3, on a 19x19 map.
sep = separable_param_count(728, 728, 3, 3)
full = 728 * 728 * 9
print(f"\n3x3 728->728: separable {sep:,} params vs regular {full:,} ({full / sep:.1f}x)")
sep_macs = 19 * 19 * (728 * 9 + 728 * 728)
print(f"           MACs at 19x19: separable {sep_macs:,} vs regular "
      f"{conv_macs(728, 728, 3, 3, 19, 19):,}")
