# %% [markdown]
# # Deploying a service and watching the first requests
#
# Three fog nodes agree on where an nginx container should run. The client
# starts sending one request per second while the container is still
# coming up, so the first few connections hit retransmission timeouts.

# %%
import numpy as np

from fogdomain.scenario import bundled_path, load_scenario
from fogdomain.simulation import run_scenario

config = load_scenario(bundled_path("deploy_nginx"))
result = run_scenario(config)
print(result.summary.requests.total, "requests,", result.summary.errors, "errors")

# %% [markdown]
# The deployment episode as the agents saw it, block by block.

# %%
for ep in result.episodes:
    print(ep["event_type"], ep["container_id"], "->", ep["elected_solver"], "votes", ep["votes"])
    for phase, t in ep["phase_times_ms"].items():
        print(f"  {phase:18s} {t / 1000:6.3f}s")

# %% [markdown]
# Connect times. Anything above a few milliseconds is a SYN that was
# retransmitted every 300 ms until the backend existed.

# %%
connect = np.array([s.connect_time for s in result.samples])
latency = np.array([s.latency_time for s in result.samples if s.outcome == "Success"])
print("slow connects:", np.sort(connect[connect > 100]))
print("median latency %.1f ms, p99.9 %.1f ms" % (np.median(latency), np.percentile(latency, 99.9)))

# %%
hist, edges = np.histogram(latency, bins=[0, 10, 15, 20, 30, 100, 1000])
for lo, hi, n in zip(edges[:-1], edges[1:], hist):
    print(f"{lo:>5g}-{hi:<5g} ms  {'#' * int(60 * n / hist.max())} {n}")
