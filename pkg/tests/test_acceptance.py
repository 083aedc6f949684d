"""End-to-end acceptance checks.

Each test records one PASS/FAIL line, echoed in the terminal summary. The
full-size runs go through the CLI on the default synthetic corpus and take
roughly twenty minutes on one CPU core.
"""
import csv
import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from emovae.cli import main
from emovae.config import load_config
from emovae.corpus import DIMENSIONS, load_manifest
from emovae.dsp import Standardizer, WaveBuffer, frame_signal, hamming_window, hz_to_mel, power_spectrum
from emovae.experiment import load_segments
from emovae.metrics import f_measure, unweighted_accuracy, weighted_accuracy
from emovae.models import AE, VAE, EncoderDecoderSpec, LatentParams, SegmentAutoencoder, kl_divergence, train_step
from emovae.numeric import AdamConfig, RngStream

pytestmark = pytest.mark.slow

GRADCHECK_CASES = 400
GRADCHECK_SECONDS = 120.0
KL_SAMPLES = 10**6
KL_REL_TOL = 0.01
CONVERGENCE_RATIO = 0.10
CONVERGENCE_EPOCHS = 50
CVAE_MIN_UA = 0.80
BASELINE_MIN_UA = 0.60
RUN_SECONDS = 600.0
DIM_MARGIN = 0.15
SWEEP_SLACK = 0.02
EQUIV_TOL = 1e-10


def record(name, ok, detail):
    ACCEPTANCE_LINES.append((name, bool(ok), detail))
    print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


def cli(*argv):
    return main([str(a) for a in argv])


def timed_run(kind, manifest, report_dir, *extra):
    start = time.perf_counter()
    code = cli("run", "--task", "categorical", "--kind", kind, "--manifest", manifest,
               "--report-dir", report_dir, *extra)
    return code, time.perf_counter() - start


@pytest.fixture(scope="module")
def cvae_run(default_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("cvae_run")
    code, seconds = timed_run("cvae", default_corpus, out)
    return out, code, seconds


def test_gradient_fidelity(tmp_path, capsys):
    start = time.perf_counter()
    code = cli("gradcheck", "--cases", GRADCHECK_CASES, "--out", tmp_path)
    seconds = time.perf_counter() - start
    out = capsys.readouterr().out
    worst = max(float(r["max_rel_error"]) for r in csv.DictReader(open(tmp_path / "gradcheck.csv")))
    with capsys.disabled():
        record("gradient fidelity", code == 0 and worst < 1e-4 and seconds < GRADCHECK_SECONDS,
               f"{GRADCHECK_CASES} cases, max rel error {worst:.2e} (< 1e-4), "
               f"{seconds:.1f}s (< {GRADCHECK_SECONDS:.0f}s), exit {code}; "
               + " | ".join(l for l in out.splitlines() if "cases=" in l))


def test_kl_matches_monte_carlo():
    rng = RngStream(2024)
    worst = 0.0
    for i in range(10):
        case = rng.child(i)
        d = 1 + int(case.integers(1, 4)[0])
        mu = case.child(0).uniform(d, -1.5, 1.5)
        log_var = case.child(1).uniform(d, -1.0, 1.0)
        closed = float(kl_divergence(LatentParams(mu, log_var)))
        eps = case.child(2).standard_normal(KL_SAMPLES * d).reshape(KL_SAMPLES, d)
        z = mu + eps * np.exp(0.5 * log_var)
        # log q(z) - log p(z); the 2*pi terms cancel
        log_q = -0.5 * np.sum(log_var + eps * eps, axis=1)
        log_p = -0.5 * np.sum(z * z, axis=1)
        mc = float(np.mean(log_q - log_p))
        worst = max(worst, abs(mc - closed) / closed)
    record("KL correctness", worst <= KL_REL_TOL,
           f"10 random latents, 1e6 samples each, worst rel error {worst:.2e} (<= {KL_REL_TOL})")


def test_metric_oracles():
    checks = [
        weighted_accuracy([[90, 10], [5, 5]]) == float(Fraction(95, 110)),
        weighted_accuracy([[9, 1], [4, 6]]) == float(Fraction(15, 20)),
        unweighted_accuracy([[90, 10], [5, 5]]) == float(Fraction(7, 10)),
        unweighted_accuracy([[10, 0], [10, 0]]) == float(Fraction(1, 2)),
        f_measure([[5, 5], [0, 10]]) == ([float(Fraction(2, 3)), float(Fraction(4, 5))],
                                         float((Fraction(2, 3) + Fraction(4, 5)) / 2)),
    ]
    record("metric oracles", all(checks), f"{sum(checks)}/{len(checks)} worked matrices exact")


def test_dsp_exactness():
    w = hamming_window(400)
    n_frames = frame_signal(WaveBuffer(np.zeros(16000), 16000)).shape[0]
    x = RngStream(11).standard_normal(400)
    p = power_spectrum(x, 512)
    one_sided = p[0] + p[-1] + 2 * p[1:-1].sum()
    parseval = abs(one_sided - 512 * np.sum(x * x)) / one_sided
    mel = hz_to_mel(700.0)
    ok = (abs(w[0] - 0.08) < 1e-12 and abs(w[-1] - 0.08) < 1e-12 and n_frames == 98
          and parseval < 1e-6 and abs(mel - 781.17) < 1e-2)
    record("DSP exactness", ok, f"hamming ends {w[0]:.15f}/{w[-1]:.15f}, {n_frames} frames, "
           f"parseval rel {parseval:.1e}, mel(700)={mel:.4f}")


def _recon_history(path):
    with open(path, newline="") as fh:
        return [float(r["recon"]) for r in csv.DictReader(fh)]


def _train_vae(manifest, out, write_config, beta1, beta2):
    cfg = write_config({"representation": {"epochs": CONVERGENCE_EPOCHS,
                                           "adam": {"beta1": beta1, "beta2": beta2}}},
                       name=f"vae_{beta1}_{beta2}.json")
    assert cli("train-rep", "--kind", "vae", "--manifest", manifest, "--config", cfg, "--out", out) == 0
    return _recon_history(out / "loss_history.csv")


def test_vae_convergence(default_corpus, tmp_path, write_config):
    # the default (0.999, 0.99) betas, reported for information only
    default = _train_vae(default_corpus, tmp_path / "default_betas", write_config, 0.999, 0.99)
    hist = _train_vae(default_corpus, tmp_path / "std_betas", write_config, 0.9, 0.999)
    ratio = hist[-1] / hist[0]
    ma = np.convolve(hist, np.ones(5) / 5, mode="valid")  # ma[j] averages epochs j+1..j+5
    tail = ma[10 - 5:]  # windows ending at epoch 10 onwards
    rises = [i + 11 for i in range(len(tail) - 1) if tail[i + 1] > tail[i]]
    ok = len(hist) == CONVERGENCE_EPOCHS and ratio <= CONVERGENCE_RATIO and not rises
    record("VAE convergence", ok,
           f"betas (0.9, 0.999): recon {hist[0]:.1f} -> {hist[-1]:.1f}, ratio {ratio:.3f} "
           f"(<= {CONVERGENCE_RATIO}); moving-average rises after epoch 10: {rises or 'none'}; "
           f"info: betas (0.999, 0.99) ratio {default[-1] / default[0]:.3f}")


def _summary_ua(report_dir):
    return json.loads((report_dir / "report.json").read_text())["summary"]["emotion"]["ua"]


def test_end_to_end_classification(cvae_run, default_corpus, tmp_path_factory):
    out, code, seconds = cvae_run
    cvae = _summary_ua(out) if code == 0 else float("nan")
    uas, times = {"cvae": cvae}, {"cvae": seconds}
    for kind in ("ae", "vae"):
        d = tmp_path_factory.mktemp(f"{kind}_run")
        c, times[kind] = timed_run(kind, default_corpus, d)
        code = code or c
        uas[kind] = _summary_ua(d) if c == 0 else float("nan")
    order = " < ".join(sorted(uas, key=uas.get)).upper()
    ok = (code == 0 and uas["cvae"] >= CVAE_MIN_UA and uas["ae"] >= BASELINE_MIN_UA
          and uas["vae"] >= BASELINE_MIN_UA and max(times.values()) < RUN_SECONDS)
    record("end-to-end classification", ok,
           f"UA cvae {uas['cvae']:.3f} (>= {CVAE_MIN_UA}), ae {uas['ae']:.3f}, vae {uas['vae']:.3f} "
           f"(>= {BASELINE_MIN_UA}); 3 seeds, wall time cvae {times['cvae']:.0f}s ae {times['ae']:.0f}s "
           f"vae {times['vae']:.0f}s (< {RUN_SECONDS:.0f}s); observed order {order}")


def test_dimensional_pipeline(default_corpus, tmp_path, write_config):
    cfg = write_config({"seeds": [0]})
    code = cli("run", "--task", "dimensional", "--kind", "cvae", "--manifest", default_corpus,
               "--config", cfg, "--report-dir", tmp_path)
    report = json.loads((tmp_path / "report.json").read_text())
    run = report["runs"][0]
    f1 = {d: run["aggregate"][d]["macro_f1"] for d in DIMENSIONS}
    chance = {d: run["aggregate"][d]["shuffled_label_macro_f1"] for d in DIMENSIONS}
    mean_ok = run["mean_f1"] == sum(f1.values()) / 3
    table = (tmp_path / "report.md").read_text()
    margins = {d: f1[d] - chance[d] for d in DIMENSIONS}
    ok = code == 0 and mean_ok and "| A | P | V | Mean |" in table and min(margins.values()) >= DIM_MARGIN
    record("dimensional pipeline", ok,
           ", ".join(f"{d[0].upper()} F1 {f1[d]:.3f} vs chance {chance[d]:.3f}" for d in DIMENSIONS)
           + f"; min margin {min(margins.values()):.3f} (>= {DIM_MARGIN}); "
           f"mean {run['mean_f1']:.4f} = (A+P+V)/3: {mean_ok}")


def test_sweep_shape(default_corpus, tmp_path, write_config):
    cfg = write_config({"seeds": [0]})
    code = cli("sweep", "--kind", "cvae", "--manifest", default_corpus, "--config", cfg,
               "--report-dir", tmp_path)
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    rows = {int(r["latent_dim"]): float(r["ua"]) for r in csv.DictReader(lines)}
    ok = (code == 0 and lines[0] == "latent_dim,model,wa,ua" and sorted(rows) == [32, 64, 128, 256, 512]
          and rows[32] <= rows[128] + SWEEP_SLACK)
    record("sweep shape", ok, f"{len(rows)} rows, header {lines[0]!r}; UA(32) {rows.get(32, math.nan):.3f} "
           f"<= UA(128) {rows.get(128, math.nan):.3f} + {SWEEP_SLACK}")


def test_reproducibility(cvae_run, default_corpus, tmp_path):
    first, code, _ = cvae_run
    code2, _ = timed_run("cvae", default_corpus, tmp_path)
    same_json = (first / "report.json").read_bytes() == (tmp_path / "report.json").read_bytes()
    ckpts = sorted(p.name for p in (first / "checkpoints").iterdir())
    differing = [n for n in ckpts
                 if (first / "checkpoints" / n).read_bytes() != (tmp_path / "checkpoints" / n).read_bytes()]
    same_set = ckpts == sorted(p.name for p in (tmp_path / "checkpoints").iterdir())
    ok = code == 0 and code2 == 0 and same_json and same_set and not differing and ckpts
    record("reproducibility", ok, f"report.json identical: {same_json}; "
           f"{len(ckpts) - len(differing)}/{len(ckpts)} checkpoints identical")


def test_equivalence_oracle(default_corpus):
    cfg = load_config()
    records = load_manifest(default_corpus)[:8]
    segs = load_segments(records, cfg.dsp)
    x = Standardizer.fit(np.vstack(list(segs.values()))).transform(np.vstack(list(segs.values())))[:32]
    models = [SegmentAutoencoder(EncoderDecoderSpec(kind), RngStream(5), AdamConfig())
              for kind in (AE, VAE)]
    delta = np.zeros((x.shape[0], 128))
    worst = 0.0
    for _ in range(10):
        a = train_step(models[0], x, kl_weight=0.0)
        v = train_step(models[1], x, kl_weight=0.0, delta=delta)
        worst = max(worst, abs(a.total - v.total))
    record("equivalence oracle", worst <= EQUIV_TOL,
           f"default-size AE vs VAE, 10 steps, max loss gap {worst:.1e} (<= {EQUIV_TOL:g})")
