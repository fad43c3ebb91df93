# Diffusion schedule and forward process. The reverse sampler lives in src.diffusion.sampling
# (imported directly, since it depends on src.model which in turn depends on this package)

from .schedule import NoiseSchedule, ScheduleConfig, build_schedule, forward_noise, x0_from_eps, posterior_step_mean_variance
