"""Python access to the dtvnet core: metrics, schedules, synthetic data and the CLI."""

from ._dtvnet import (  # noqa: F401
    __version__,
    flow_mse,
    lr_at,
    profile_defaults,
    psnr,
    run_cli,
    ssim,
    synth_clip,
)
