"""From a regular convolution to a depthwise separable one.

A 1x1 convolution followed by spatial convolutions over g channel segments
interpolates between the two: g=1 is a 1x1 conv then a full 3x3 conv, and
g=M (one channel per segment) is a 1x1 conv then a depthwise conv.  This
script checks both endpoints numerically and prints the weight count along
the way.
"""

from xsep import conv as K
from xsep.equiv import relative_deviation
from xsep.tensor import Rng

rng = Rng(2024)
m_in, m, hw = 16, 32, 12
geom = K.ConvGeometry.square(3)
x = rng.normal((2, m_in, hw, hw))
pw = rng.normal((m, m_in, 1, 1))
mid = K.pointwise_conv2d(x, pw)

print(f"{'segments':>8}{'spatial weights':>17}")
for g in (1, 2, 4, 8, 16, 32):
    print(f"{g:>8}{K.spectrum_spatial_param_count(m, g):>17,}")

full = rng.normal((m, m, 3, 3))
dev = relative_deviation(K.segment_spectrum_conv(x, pw, full, 1, geom),
                         K.conv2d_naive(mid, full, geom))
print(f"\ng=1 vs 1x1 + regular 3x3:    relative deviation {dev:.1e}")

per_channel = rng.normal((m, 1, 3, 3))
dev = relative_deviation(K.segment_spectrum_conv(x, pw, per_channel, m, geom),
                         K.depthwise_conv2d_naive(mid, per_channel.reshape(1, m, 3, 3), geom))
print(f"g=M vs 1x1 + depthwise 3x3:  relative deviation {dev:.1e}")

# The library's separable conv runs the steps the other way round:
# depthwise first, then pointwise, so the spatial filters see the narrower input.
dw = rng.normal((1, m_in, 3, 3))
out = K.separable_conv2d(x, dw, pw, geom)
print(f"\ndepthwise-then-pointwise output {out.shape}, "
      f"{dw.size + pw.size:,} weights vs {K.spectrum_spatial_param_count(m, m) + pw.size:,} "
      "for pointwise-then-depthwise")
