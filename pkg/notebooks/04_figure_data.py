# %% [markdown]
# # From run directories to plot-ready CSV
#
# Every run writes its samples, summary and metadata to a directory. The
# figure-data step turns one or more of those into a CSV series. Nothing
# is rendered here; feed the CSVs to any plotting tool.

# %%
import csv
import tempfile
from pathlib import Path

from fogdomain.figures import figure_data
from fogdomain.scenario import bundled_path, load_scenario
from fogdomain.simulation import run_scenario, write_artifacts

work = Path(tempfile.mkdtemp())
deploy = work / "deploy"
write_artifacts(run_scenario(load_scenario(bundled_path("deploy_nginx"))), deploy)
print(sorted(p.name for p in deploy.iterdir()))

# %%
cdf = figure_data(deploy, "f7", work)
rows = list(csv.reader(open(cdf)))
print(rows[0])
for row in rows[1:40:4]:
    print(row)

# %% [markdown]
# The latency-over-time series compares runs with and without health gating.

# %%
dirs = []
for name in ("health_contrast_hfalse", "health_contrast_htrue"):
    d = work / name
    write_artifacts(run_scenario(load_scenario(bundled_path(name))), d)
    dirs.append(d)
series = figure_data(dirs, "f10", work)
peaks = {}
for label, _, _, lat, outcome in list(csv.reader(open(series)))[1:]:
    if outcome == "Success":
        peaks[label] = max(peaks.get(label, 0.0), float(lat))
print(peaks)
