# %% [markdown]
# # One migration per workload profile
#
# The same migration is run against nginx (short connections), nextcloud
# (slow responses) and postgres (one long-lived stream). The stream only
# notices the move when an unacknowledged packet times out.

# %%
from fogdomain.scenario import bundled_path, load_scenario
from fogdomain.simulation import run_scenario

runs = {name: run_scenario(load_scenario(bundled_path(f"migrate_{name}")))
        for name in ("nginx", "nextcloud", "postgres")}

# %%
for name, r in runs.items():
    lat = [s.latency_time for s in r.samples]
    worst = max(r.samples, key=lambda s: s.latency_time)
    print(f"{name:10s} median {sorted(lat)[len(lat) // 2]:7.1f} ms   worst {worst.latency_time:7.1f} ms "
          f"at t={worst.sent_at / 1000:.1f}s   flow rules installed {r.sim.switch.installs}")

# %% [markdown]
# Which backend served each postgres query, around the migration.

# %%
pg = runs["postgres"]
spike = max(range(len(pg.samples)), key=lambda i: pg.samples[i].latency_time)
for s in pg.samples[spike - 3:spike + 3]:
    print(f"{s.sent_at / 1000:6.1f}s  {s.latency_time:6.1f} ms  {s.serving_backend}")
