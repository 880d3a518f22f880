"""The local decoding unit end to end: embed syndromes as tensors, run
INT8 streaming inference, threshold without dequantizing, and apply the
parallel syndrome update. Uses the bundled trained weights.

Run with: python demos/local_decoder.py
"""

import numpy as np

import latte
from latte import nldu

weights = nldu.load_weights(latte.default_weights_path())
print(f"network: {weights.parameter_count} parameters, "
      f"integer acceptance threshold {weights.theta_int()}")

model = latte.build_dem(latte.build_surface_code(9), 20,
                        latte.NoiseParams.uniform(1e-3))
codec = nldu.TensorCodec(model)
ld = nldu.LocalDecoder(model, weights)

res_bits = raw_bits = 0
caught = 0
for i in range(50):
    shot = latte.sample_shot(model, seed=3, shot_index=i)
    rounds, local_mask, (res, raw) = ld.transform_shot(shot)
    res_bits += res
    raw_bits += raw
print(f"residual syndrome ratio over 50 shots at p=1e-3: "
      f"{res_bits / raw_bits:.1%} ({res_bits}/{raw_bits} bits)")

# streaming inference is bit-exact against whole-volume convolution
shot = latte.sample_shot(model, seed=3, shot_index=0)
raw = codec.embed_shot(shot)
pipe = nldu.StreamingPipeline(weights, codec.width, codec.height)
outs = []
for t in range(raw.shape[2]):
    outs.extend(pipe.push(raw[:, :, t, :]))
outs.extend(pipe.flush())
batch = nldu.infer_volume(weights, raw)
print("streaming == batch:", np.array_equal(np.stack(outs, axis=2), batch))

# hardware cost of the shipped configuration and a fresh search
cfg = nldu.NlduConfig(tile=9, parallel=(52, 33, 27))
est = nldu.estimate_resources(cfg)
print(f"shipped config: {est.lut} LUTs, {est.reg} registers, "
      f"{est.ltc_s * 1e6:.3f} us input-to-prediction latency")
found = nldu.search_config(9, 300e6)
print(f"search under a 1 us/stage budget picks lanes {found.parallel} "
      f"({nldu.estimate_resources(found).lut} LUTs)")
