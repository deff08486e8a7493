# %% [markdown]
# # A simulated day of periodic migrations
#
# Two configurations: three requests per second with health gating off,
# and one request per second with gating on and a slower migration period.
# A full day takes 5 to 20 s of wall time; lower HOURS to go faster.

# %%
import dataclasses

from fogdomain.scenario import bundled_path, load_scenario
from fogdomain.simulation import run_scenario

HOURS = 24

for name in ("soak_r3_hfalse", "soak_r1_htrue"):
    config = load_scenario(bundled_path(name))
    config = dataclasses.replace(config, duration_s=HOURS * 3600)
    s = run_scenario(config).summary
    print(f"{name}: {s.migrations.total} migrations, {s.requests.total} requests, "
          f"{s.errors} errors, availability {s.availability:.5%}")

# %% [markdown]
# Errors come from requests admitted to the old container in the few
# milliseconds before its flow rules are withdrawn; their data packets are
# lost and the client gives up after the response timeout. Draining the
# old backend before removal makes them disappear.

# %%
config = dataclasses.replace(load_scenario(bundled_path("soak_r1_htrue")), duration_s=HOURS * 3600)
drained = dataclasses.replace(config, agents=dataclasses.replace(config.agents, drain_ms=50.0))
print("with a 50 ms drain:", run_scenario(drained).summary.errors, "errors")
