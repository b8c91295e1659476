"""Command-line front end: simulate / train / evaluate / verify.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 property
failure.  Every run writes a ``manifest.json`` beside its outputs with the
full configuration, seed, version, and timestamps; the data files themselves
contain nothing run-dependent, so reruns with one seed are byte-identical.

A config file (``--config``) holds flat ``key = value`` lines using the long
flag names without the leading dashes (e.g. ``n-items = 100``); precedence is
CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, data, datagen, losses, metrics, models, quadrature
from .core import PartitionedPreference, log_likelihood_exact
from .quadrature import ErrorBudget, IntegrationConfig
from .training import LOSS_KINDS, TrainConfig, time_loss_steps, train

LINE_SEARCH_LRS = (1e-4, 1e-3, 1e-2)


class _CliError(Exception):
    """Configuration problem; maps to exit code 1."""


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)

    def write(self, out_dir):
        self.finished = _now()
        path = out_dir / "manifest.json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _int_list(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok]


def _str_list(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def _load_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as handle:
        for raw in handle:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _CliError(f"config line without '=': {raw.rstrip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def build_parser() -> tuple[_ArgumentParser, dict]:
    parser = _ArgumentParser(prog="plpartition", description=__doc__,
                             formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    subparsers = {}

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=str, default="0",
                       help="random seed (simulate accepts a comma list)")
        p.add_argument("--threads", type=int, default=0,
                       help="cap BLAS worker threads (0 = leave unchanged)")
        p.add_argument("--out", default="runs/latest", help="output directory")
        p.add_argument("--intervals", type=int, default=10000,
                       help="quadrature interval count T")
        p.add_argument("--shift-c", type=float, default=5.0,
                       help="centering shift for the block integrals")

    p_sim = sub.add_parser("simulate", help="fit free per-item parameters on synthetic data")
    common(p_sim)
    p_sim.add_argument("--n-items", type=str, default="100", help="comma list of item counts")
    p_sim.add_argument("--n-samples", type=str, default="1000", help="comma list of sample counts")
    p_sim.add_argument("--partitions", type=int, default=4, help="number of ordered blocks M")
    p_sim.add_argument("--cap", type=int, default=500, help="max items in the top M-1 blocks")
    p_sim.add_argument("--loss", type=str, default="pl-partition",
                       help=f"comma list from {', '.join(LOSS_KINDS)}")
    p_sim.add_argument("--lr", type=float, default=0.1)
    p_sim.add_argument("--batch-size", type=int, default=128)
    p_sim.add_argument("--epochs", type=int, default=15)
    p_sim.add_argument("--patience", type=int, default=2)
    p_sim.add_argument("--emit-dataset", action="store_true",
                       help="also write the two-level projection of the generated data")

    p_train = sub.add_parser("train", help="train an MLP scorer on a sparse dataset")
    common(p_train)
    p_train.add_argument("dataset", help="sparse multi-label text file")
    p_train.add_argument("--loss", choices=[k for k in LOSS_KINDS if k != "pl-topk"],
                         default="pl-partition")
    p_train.add_argument("--lr", type=str, default="search",
                         help="learning rate, or 'search' for {1e-4,1e-3,1e-2} by validation loss")
    p_train.add_argument("--batch-size", type=int, default=128)
    p_train.add_argument("--epochs", type=int, default=20)
    p_train.add_argument("--patience", type=int, default=3)
    p_train.add_argument("--valid-fraction", type=float, default=0.25)
    p_train.add_argument("--hidden", type=int, default=256)
    p_train.add_argument("--init-checkpoint", help="resume from a saved checkpoint")

    p_eval = sub.add_parser("evaluate", help="score a checkpoint on a test set")
    common(p_eval)
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("dataset", help="test split in the sparse text format")
    p_eval.add_argument("--train-data", help="training split for propensity estimation")
    p_eval.add_argument("--ks", type=str, default="1,3,5,10")

    p_verify = sub.add_parser("verify", help="run the numerical property suites")
    common(p_verify)
    p_verify.add_argument("--trials", type=int, default=50)
    p_verify.add_argument("--scaling", action="store_true",
                          help="also time optimizer steps across item counts")
    subparsers.update(simulate=p_sim, train=p_train, evaluate=p_eval, verify=p_verify)
    return parser, subparsers


def _prepare(args) -> "pathlib.Path":
    import pathlib

    if args.threads:
        try:
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=args.threads)
        except ImportError:
            pass
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _integration(args) -> IntegrationConfig:
    return IntegrationConfig(intervals=args.intervals, shift=args.shift_c)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_simulate(args) -> int:
    out = _prepare(args)
    seeds = _int_list(args.seed)
    loss_kinds = _str_list(args.loss)
    for kind in loss_kinds:
        if kind not in LOSS_KINDS:
            raise _CliError(f"unknown loss {kind!r}")
    manifest = RunManifest("simulate", {k: v for k, v in vars(args).items() if k != "config"},
                           seed=seeds[0], started=_now())
    rows = []
    for n_items in _int_list(args.n_items):
        for n_samples in _int_list(args.n_samples):
            for seed in seeds:
                # one dataset per grid cell, shared by all losses
                sim = datagen.SimConfig(n_items=n_items, n_samples=n_samples,
                                        n_partitions=args.partitions,
                                        top_cap=args.cap, seed=seed)
                truth, samples = datagen.generate_dataset(sim)
                if args.emit_dataset:
                    path = out / f"sim_N{n_items}_n{n_samples}_s{seed}.txt"
                    data.serialize_xmlc(datagen.to_xmlc_dataset(samples, n_items), path)
                    manifest.outputs.append(str(path))
                for kind in loss_kinds:
                    cfg = TrainConfig(loss=kind, lr=args.lr, batch_size=args.batch_size,
                                      max_epochs=args.epochs, patience=args.patience,
                                      valid_fraction=0.15, optimizer="adagrad",
                                      integration=_integration(args), seed=seed)
                    model, _ = train(samples, models.FreeParamModel(n_items), cfg)
                    mse = datagen.mse_vs_truth(model.theta, truth)
                    rows.append([n_items, n_samples, kind, seed, repr(mse)])
    header = ["n_items", "n_samples", "loss", "seed", "mse"]
    _write_rows(out / "mse.csv", header, rows)
    with open(out / "mse.json", "w", encoding="utf-8") as handle:
        json.dump([dict(zip(header, row)) for row in rows], handle, indent=2)
        handle.write("\n")
    for kind in loss_kinds:
        agg = {}
        for n_items, n_samples, k, _, mse in rows:
            if k == kind:
                agg.setdefault(n_samples, []).append(float(mse))
        with open(out / f"plot_mse_{kind}.dat", "w", encoding="utf-8") as handle:
            for n_samples in sorted(agg):
                handle.write(f"{n_samples} {np.mean(agg[n_samples])!r}\n")
        manifest.outputs.append(str(out / f"plot_mse_{kind}.dat"))
    manifest.outputs += [str(out / "mse.csv"), str(out / "mse.json")]
    manifest.write(out)
    return 0


def _train_once(examples, model, cfg: TrainConfig):
    best, log = train(examples, model, cfg)
    final_valid = log[-1]["valid_loss"] if log else np.inf
    best_valid = min((row["valid_loss"] for row in log), default=final_valid)
    return best, log, best_valid


def cmd_train(args) -> int:
    out = _prepare(args)
    seed = int(args.seed)
    dataset = data.parse_xmlc(args.dataset)
    examples = data.to_train_examples(dataset)
    if not examples:
        raise _CliError("dataset holds no trainable samples (labels empty or full)")

    def make_model():
        if args.init_checkpoint:
            model, _ = models.load_checkpoint(args.init_checkpoint)
            return model
        return models.MlpModel(dataset.n_features, dataset.n_labels,
                               hidden=args.hidden, rng=np.random.default_rng(seed))

    def make_cfg(lr: float) -> TrainConfig:
        return TrainConfig(loss=args.loss, lr=lr, batch_size=args.batch_size,
                           max_epochs=args.epochs, patience=args.patience,
                           valid_fraction=args.valid_fraction, optimizer="adam",
                           integration=_integration(args), seed=seed)

    manifest = RunManifest("train", {k: v for k, v in vars(args).items() if k != "config"},
                           seed=seed, started=_now())
    log_rows = []
    if args.lr == "search":
        candidates = []
        for lr in LINE_SEARCH_LRS:
            model, log, best_valid = _train_once(examples, make_model(), make_cfg(lr))
            candidates.append((best_valid, lr, model))
            log_rows += [[lr, row["epoch"], repr(row["train_loss"]), repr(row["valid_loss"])]
                         for row in log]
        best_valid, chosen_lr, model = min(candidates, key=lambda c: (c[0], c[1]))
    else:
        try:
            chosen_lr = float(args.lr)
        except ValueError:
            raise _CliError(f"--lr must be a float or 'search', got {args.lr!r}")
        model, log, best_valid = _train_once(examples, make_model(), make_cfg(chosen_lr))
        log_rows = [[chosen_lr, row["epoch"], repr(row["train_loss"]), repr(row["valid_loss"])]
                    for row in log]

    ckpt = out / "checkpoint.npz"
    models.save_checkpoint(ckpt, model, config={"loss": args.loss, "lr": chosen_lr,
                                                "intervals": args.intervals,
                                                "shift_c": args.shift_c}, seed=seed)
    _write_rows(out / "training_log.csv", ["lr", "epoch", "train_loss", "valid_loss"], log_rows)
    with open(out / "training_log.json", "w", encoding="utf-8") as handle:
        json.dump({"chosen_lr": chosen_lr, "best_valid_loss": best_valid,
                   "rows": [dict(zip(("lr", "epoch", "train_loss", "valid_loss"), r))
                            for r in log_rows]}, handle, indent=2)
        handle.write("\n")
    manifest.outputs += [str(ckpt), str(out / "training_log.csv"), str(out / "training_log.json")]
    manifest.write(out)
    print(f"trained {args.loss} (lr={chosen_lr}); best validation loss {best_valid:.6f}")
    return 0


def cmd_evaluate(args) -> int:
    out = _prepare(args)
    model, _ = models.load_checkpoint(args.checkpoint)
    test = data.parse_xmlc(args.dataset)
    ks = tuple(_int_list(args.ks))
    prop = None
    if args.train_data:
        prop = metrics.estimate_propensities(data.parse_xmlc(args.train_data))
    scores = (model.forward(s.feat_idx, s.feat_val) for s in test.samples)
    relevants = (s.labels for s in test.samples)
    table = metrics.corpus_metrics(scores, relevants, ks=ks, prop=prop)
    metrics.write_metrics_csv(table, out / "metrics.csv")
    metrics.write_metrics_json(table, out / "metrics.json")
    for family in sorted({key.partition("@")[0] for key in table}):
        with open(out / f"plot_{family}.dat", "w", encoding="utf-8") as handle:
            for k in ks:
                handle.write(f"{k} {table[f'{family}@{k}']!r}\n")
    manifest = RunManifest("evaluate", {k: v for k, v in vars(args).items() if k != "config"},
                           seed=int(args.seed), started=_now())
    manifest.outputs += [str(out / "metrics.csv"), str(out / "metrics.json")]
    manifest.write(out)
    for key in sorted(table):
        print(f"{key}: {table[key]:.4f}")
    return 0


def _random_instance(rng):
    n = int(rng.integers(3, 9))
    w = rng.uniform(-3.0, 3.0, n)
    ids = list(rng.permutation(n))
    blocks = []
    while ids:
        k = int(rng.integers(1, min(4, len(ids)) + 1))
        blocks.append(np.array(ids[:k]))
        ids = ids[k:]
    if len(blocks) == 1:
        blocks = [blocks[0][:1], blocks[0][1:]]
    return PartitionedPreference(tuple(blocks), n), w


def cmd_verify(args) -> int:
    out = _prepare(args)
    cfg = _integration(args)
    rng = np.random.default_rng(int(args.seed))
    manifest = RunManifest("verify", {k: v for k, v in vars(args).items() if k != "config"},
                           seed=int(args.seed), started=_now())
    failures = []

    worst_ll = 0.0
    worst_grad = 0.0
    worst_sum = 0.0
    worst_lb = 0.0
    for _ in range(args.trials):
        pref, w = _random_instance(rng)
        exact = log_likelihood_exact(pref, w)
        ll, grad = quadrature.log_likelihood_and_grad(pref, w, cfg)
        worst_ll = max(worst_ll, abs(ll - exact))
        worst_sum = max(worst_sum, abs(grad.sum()))
        h = 1e-4
        for k in range(pref.n_items):
            wp, wm = w.copy(), w.copy()
            wp[k] += h
            wm[k] -= h
            fd = (quadrature.log_likelihood_numeric(pref, wp, cfg)
                  - quadrature.log_likelihood_numeric(pref, wm, cfg)) / (2 * h)
            worst_grad = max(worst_grad, abs(grad[k] - fd))
        gap = losses.pl_lb_loss(pref, w).value - losses.pl_partition_loss(pref, w, cfg).value
        worst_lb = max(worst_lb, max(0.0, -gap))
    print(f"oracle equivalence worst |error| : {worst_ll:.3e}")
    print(f"gradient FD worst |error|        : {worst_grad:.3e}")
    print(f"gradient sum worst |error|       : {worst_sum:.3e}")
    print(f"lower-bound worst violation      : {worst_lb:.3e}")
    if worst_ll > 1e-4:
        failures.append("oracle equivalence")
    if worst_grad > 1e-4 or worst_sum > 1e-6:
        failures.append("gradient correctness")
    if worst_lb > 1e-4:
        failures.append("lower-bound ordering")

    t_list = (200, 400, 800, 1600, 3200)
    errors = np.zeros(len(t_list))
    for _ in range(20):
        pref, w = _random_instance(rng)
        probe = quadrature.convergence_probe(pref, w, t_list, shift=args.shift_c)
        errors += np.array([e for _, e in probe])
    slope = float(np.polyfit(np.log(t_list), np.log(errors / 20), 1)[0])
    print(f"convergence slope (mean error)   : {slope:+.3f}")
    if not -2.5 <= slope <= -1.5:
        failures.append("convergence slope")

    budget = ErrorBudget(epsilon=0.01, c_bound=3.0, c0=0.5)
    if quadrature.recommended_intervals_likelihood(9, budget) != 2599:
        failures.append("interval budget (likelihood)")

    if args.scaling:
        for n_items in (100, 1000, 10000):
            secs = time_loss_steps(n_items, n_steps=100, intervals=args.intervals)
            print(f"scaling: N={n_items:>6}  {secs:.2f}s / 100 steps")

    report = {"worst_loglik_error": worst_ll, "worst_gradient_fd_error": worst_grad,
              "worst_gradient_sum": worst_sum, "worst_lower_bound_violation": worst_lb,
              "convergence_slope": slope, "failures": failures}
    with open(out / "verify.json", "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2)
        handle.write("\n")
    manifest.outputs.append(str(out / "verify.json"))
    manifest.write(out)
    if failures:
        print("FAILED: " + ", ".join(failures))
        return 3
    print("all properties hold")
    return 0


def _config_namespace(subparser, overrides: dict) -> argparse.Namespace:
    """Config-file values as a pre-seeded namespace (flags still win)."""
    ns = argparse.Namespace()
    actions = {a.dest: a for a in subparser._actions}
    unknown = set(overrides) - set(actions)
    if unknown:
        raise _CliError(f"unknown config keys: {sorted(unknown)}")
    for key, raw in overrides.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except ValueError:
                raise _CliError(f"bad config value for {key}: {raw!r}")
        else:
            value = raw
        setattr(ns, key, value)
    return ns


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    try:
        # two-stage parse so --config supplies values that explicit flags override
        args, _ = parser.parse_known_args(argv)
        namespace = None
        if getattr(args, "config", None):
            namespace = _config_namespace(subparsers[args.subcommand],
                                          _load_config_file(args.config))
        args = parser.parse_args(argv, namespace)
        handler = {"simulate": cmd_simulate, "train": cmd_train,
                   "evaluate": cmd_evaluate, "verify": cmd_verify}[args.subcommand]
        return handler(args)
    except _CliError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (data.MalformedHeaderError, data.MalformedLineError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
