"""Python access to the mix-shift MLP core (C++ extension ``_msmlp``)."""

import json

from ._msmlp import (
    InvalidArgument,
    count_flops,
    count_params,
    forward,
    gradcheck,
    mix_shift,
    mix_shift_reference,
    oracle,
    preset_json,
    preset_names,
    train,
)


def preset(name):
    """Preset configuration as a plain dict."""
    return json.loads(preset_json(name))


def spec_json(d, r, axis_mode="dual", conv_type="depthwise", projection="pre_post"):
    return json.dumps(
        {"d": list(d), "r": list(r), "axis_mode": axis_mode, "conv_type": conv_type, "projection": projection}
    )


__all__ = [
    "InvalidArgument",
    "count_flops",
    "count_params",
    "forward",
    "gradcheck",
    "mix_shift",
    "mix_shift_reference",
    "oracle",
    "preset",
    "preset_json",
    "preset_names",
    "spec_json",
    "train",
]
