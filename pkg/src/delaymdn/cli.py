"""Command-line pipelines: simulate, make-dataset, train, evaluate, reproduce.

Every stage writes plain CSV/JSON so it can be inspected or rerun on its own.
Reports embed the fully resolved configuration; passing a report back through
``--config`` reruns with exactly that configuration.

Exit codes: 0 success, 1 invalid configuration or input, 2 file-system error.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import dataset as ds
from . import distributions as dist
from . import evaluation as ev
from . import mdn
from . import mixture as mx
from . import simulator
from .arrivals import DeterministicOnOff, HomogeneousPoisson, SinusoidalNHPP
from .neuralnet import MseModel, TrainConfig, fit_mse_model

INT = "int"
FLOAT = "float"
BOOL = "bool"
STR = "str"
OPT_INT = "int|null"
OPT_FLOAT = "float|null"
INT_LIST = "int-list"

# default value and expected type per key; nested dicts are sections
SCHEMA = {
    "sim": {
        "c": (20, INT),
        "mean_service": (1.0, FLOAT),
        "rho": (0.95, OPT_FLOAT),
        "lambda_bar": (None, OPT_FLOAT),
        "arrival": {
            "type": ("nhpp", STR),
            "alpha": (0.5, FLOAT),
            "period": (144.0, FLOAT),
            "cycle": (24.0, FLOAT),
            "duty": (0.75, FLOAT),
            "on_pattern": ("deterministic", STR),
        },
        "service": {
            "type": ("lognormal", STR),
            "cv": (1.0, FLOAT),
        },
        "n_customers": (60_000, OPT_INT),
        "horizon_time": (None, OPT_FLOAT),
        "warmup": (10_000, INT),
        "seed": (0, INT),
    },
    "dataset": {
        "h": (50, INT),
        "n_train": (27_000, INT),
        "n_test": (5_000, INT),
        "standardize": (True, BOOL),
    },
    "model": {
        "type": ("mse", STR),
        "hidden": ([32, 32], INT_LIST),
        "activation": ("tanh", STR),
        "K": (3, INT),
        "sigma_floor": (1e-3, FLOAT),
        "train": {
            "learning_rate": (1e-3, FLOAT),
            "batch_size": (128, INT),
            "max_epochs": (200, INT),
            "beta1": (0.9, FLOAT),
            "beta2": (0.999, FLOAT),
            "eps": (1e-8, FLOAT),
            "patience": (10, INT),
            "val_fraction": (0.1, FLOAT),
            "seed": (0, INT),
            "clip_norm": (None, OPT_FLOAT),
        },
    },
    "eval": {
        "eps_ub": (0.05, FLOAT),
        "eps_lb": (0.05, FLOAT),
        "p_cl": (0.95, FLOAT),
    },
}

CHOICES = {
    "sim.arrival.type": ("nhpp", "onoff", "poisson"),
    "sim.arrival.on_pattern": ("deterministic", "poisson"),
    "sim.service.type": ("lognormal", "h2", "exponential"),
    "model.type": ("mse", "mdn"),
    "model.activation": ("tanh", "relu"),
}

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6")
SCATTER_HISTORIES = (1, 25, 50)
PDF_LES_VALUES = (5.0, 10.0, 15.0)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _defaults(schema: dict) -> dict:
    return {k: _defaults(v) if isinstance(v, dict) else copy.deepcopy(v[0]) for k, v in schema.items()}


def _check_type(key: str, value, kind: str):
    is_int = isinstance(value, int) and not isinstance(value, bool)
    is_num = is_int or isinstance(value, float)
    if kind == INT and is_int:
        return value
    if kind == FLOAT and is_num:
        return float(value)
    if kind == BOOL and isinstance(value, bool):
        return value
    if kind == STR and isinstance(value, str):
        return value
    if kind == OPT_INT and (value is None or is_int):
        return value
    if kind == OPT_FLOAT and (value is None or is_num):
        return None if value is None else float(value)
    if kind == INT_LIST and isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value):
        return list(value)
    raise ConfigError(f"config key '{key}' expects {kind}, got {value!r}")


def _merge(schema: dict, base: dict, override: dict, prefix: str = "") -> dict:
    if not isinstance(override, dict):
        raise ConfigError(f"config section '{prefix.rstrip('.') or '<root>'}' must be an object")
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = prefix + key
        if key not in schema:
            raise ConfigError(f"config key '{path}' is not recognized")
        if isinstance(schema[key], dict):
            out[key] = _merge(schema[key], base[key], value, path + ".")
        else:
            out[key] = _check_type(path, value, schema[key][1])
    return out


def _positive(cfg: dict, key: str, strict: bool = True):
    section, _, name = key.rpartition(".")
    node = cfg
    for part in section.split("."):
        node = node[part]
    value = node[name]
    if value is None:
        return
    if (strict and not value > 0) or (not strict and value < 0):
        raise ConfigError(f"config key '{key}' must be {'positive' if strict else 'non-negative'}, got {value}")


def validate(cfg: dict) -> dict:
    for key, allowed in CHOICES.items():
        node = cfg
        for part in key.split("."):
            node = node[part]
        if node not in allowed:
            raise ConfigError(f"config key '{key}' must be one of {list(allowed)}, got {node!r}")
    for key in ("sim.c", "sim.mean_service", "sim.rho", "sim.lambda_bar", "sim.arrival.period", "sim.arrival.cycle",
                "sim.service.cv", "sim.n_customers", "sim.horizon_time", "dataset.h", "model.K", "model.sigma_floor"):
        _positive(cfg, key)
    for key in ("sim.warmup", "sim.seed", "dataset.n_train", "dataset.n_test", "model.train.seed"):
        _positive(cfg, key, strict=False)
    sim = cfg["sim"]
    if (sim["rho"] is None) == (sim["lambda_bar"] is None):
        raise ConfigError("config keys 'sim.rho' and 'sim.lambda_bar': set exactly one")
    if (sim["n_customers"] is None) == (sim["horizon_time"] is None):
        raise ConfigError("config keys 'sim.n_customers' and 'sim.horizon_time': set exactly one")
    if not 0 <= sim["arrival"]["alpha"] <= 1:
        raise ConfigError(f"config key 'sim.arrival.alpha' must lie in [0, 1], got {sim['arrival']['alpha']}")
    if not 0 < sim["arrival"]["duty"] <= 1:
        raise ConfigError(f"config key 'sim.arrival.duty' must lie in (0, 1], got {sim['arrival']['duty']}")
    if sim["service"]["type"] == "h2" and not sim["service"]["cv"] > 1:
        raise ConfigError("config key 'sim.service.cv' must exceed 1 for h2 service")
    if sim["arrival"]["type"] == "poisson" and not arrival_rate(cfg) < sim["c"] / sim["mean_service"]:
        raise ConfigError("config key 'sim.rho': Poisson arrivals need load below 1 for a stationary queue")
    if not cfg["model"]["hidden"] or min(cfg["model"]["hidden"]) < 1:
        raise ConfigError("config key 'model.hidden' needs at least one positive width")
    ev_cfg = cfg["eval"]
    for key in ("eps_ub", "eps_lb", "p_cl"):
        if not 0 < ev_cfg[key] < 1:
            raise ConfigError(f"config key 'eval.{key}' must lie in (0, 1), got {ev_cfg[key]}")
    if ev_cfg["eps_ub"] + ev_cfg["eps_lb"] >= 1:
        raise ConfigError("config keys 'eval.eps_ub' and 'eval.eps_lb' must sum below 1")
    try:
        train_config(cfg)
    except ValueError as exc:
        raise ConfigError(f"config section 'model.train': {exc}") from None
    return cfg


def resolve(override: Optional[dict] = None, seed: Optional[int] = None) -> dict:
    """Defaults, then ``override``, then ``seed`` (applied to simulation and training)."""
    cfg = _merge(SCHEMA, _defaults(SCHEMA), override or {})
    sim_override = (override or {}).get("sim", {})
    if sim_override.get("lambda_bar") is not None and "rho" not in sim_override:
        # a direct arrival rate replaces the default load
        cfg["sim"]["rho"] = None
    if seed is not None:
        if seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {seed}")
        cfg["sim"]["seed"] = seed
        cfg["model"]["train"]["seed"] = seed
    return validate(cfg)


def load_config(path: Optional[str]) -> dict:
    """Read a config file; a report that embeds a config is accepted too."""
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    return data


def arrival_rate(cfg: dict) -> float:
    sim = cfg["sim"]
    if sim["lambda_bar"] is not None:
        return sim["lambda_bar"]
    return sim["rho"] * sim["c"] / sim["mean_service"]


def arrival_process(cfg: dict):
    a = cfg["sim"]["arrival"]
    lam = arrival_rate(cfg)
    if a["type"] == "nhpp":
        return SinusoidalNHPP(lam, a["alpha"], a["period"])
    if a["type"] == "onoff":
        return DeterministicOnOff(a["cycle"], a["duty"], lam / a["duty"], a["on_pattern"])
    return HomogeneousPoisson(lam)


def service_law(cfg: dict):
    s, mean = cfg["sim"]["service"], cfg["sim"]["mean_service"]
    if s["type"] == "lognormal":
        return dist.fit_lognormal(mean, s["cv"])
    if s["type"] == "h2":
        return dist.fit_h2_balanced(mean, s["cv"])
    return dist.Exponential(1.0 / mean)


def sim_config(cfg: dict) -> simulator.SimConfig:
    sim = cfg["sim"]
    return simulator.SimConfig(
        c=sim["c"],
        arrival=arrival_process(cfg),
        service=service_law(cfg),
        n_customers=sim["n_customers"],
        horizon_time=sim["horizon_time"],
        warmup=sim["warmup"],
        seed=sim["seed"],
    )


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["model"]["train"])


# ---------------------------------------------------------------- output helpers


def write_json(obj, path: Path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_history(history: dict, path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for e, t, v in zip(history["epoch"], history["train_loss"], history["val_loss"]):
            fh.write(f"{e},{t:.17g},{v:.17g}\n")


def _clean(value):
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    return out


def _read_model(path: str):
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc.msg})") from None
    head = data.get("head") if isinstance(data, dict) else None
    if head == "mse":
        return MseModel.from_dict(data)
    if isinstance(head, dict) and head.get("type") == "mdn":
        return mdn.MdnModel.from_dict(data)
    raise ValueError(f"{path}: unrecognized model head {head!r}")


# ---------------------------------------------------------------- stages


def simulate(cfg: dict, out: Path) -> simulator.SimOutput:
    sim = simulator.run(sim_config(cfg))
    simulator.write_csv(sim, out / "customers.csv")
    write_json({"config": cfg, "n_arrivals": sim.n_arrivals, "warmup": sim.warmup}, out / "simulate.json")
    return sim


def make_dataset(sim: simulator.SimOutput, cfg: dict, out: Path, h: Optional[int] = None) -> tuple[ds.Dataset, ds.Dataset]:
    h = h or cfg["dataset"]["h"]
    full = ds.extract(sim, h)
    train, test = ds.split_chronological(full, cfg["dataset"]["n_train"], cfg["dataset"]["n_test"])
    ds.write_csv(train, out / f"train_h{h}.csv")
    ds.write_csv(test, out / f"test_h{h}.csv")
    return train, test


def train(train_set: ds.Dataset, cfg: dict, out: Path, tag: str):
    m = cfg["model"]
    tc = train_config(cfg)
    if m["type"] == "mse":
        model = fit_mse_model(train_set, tc, m["hidden"], m["activation"], cfg["dataset"]["standardize"])
    else:
        model = mdn.fit_mdn_model(train_set, tc, m["K"], m["hidden"], m["sigma_floor"], cfg["dataset"]["standardize"])
    write_json(model.to_dict(), out / f"model_{tag}.json")
    write_history(model.history, out / f"history_{tag}.csv")
    return model


def evaluate(model, test: ds.Dataset, cfg: dict, out: Path, tag: str, hol: Optional[np.ndarray] = None) -> dict:
    """Score ``model`` ("les", "hol" or a trained model) on ``test`` and export figure data."""
    e = cfg["eval"]
    les = ev.les_predictions(test)
    mixtures = None
    if model == "les":
        preds = les
    elif model == "hol":
        if hol is None:
            raise ValueError("the HOL baseline needs per-customer HOL values (pass --customers)")
        preds = hol
    elif isinstance(model, MseModel):
        preds = model.predict(test.features)
    else:
        mixtures = mdn.predict_distributions(model, test.features)
        preds = np.array([mx.mean(m) for m in mixtures])
    rep = ev.report(tag, preds, test.labels, les, mixtures, e["eps_ub"], e["eps_lb"], e["p_cl"])
    ev.export_scatter(preds, test.labels, out / f"scatter_{tag}.csv")
    if mixtures is not None:
        mmse, lb, ub, lo, hi = ev.bands(mixtures, e["eps_ub"], e["eps_lb"], e["p_cl"])
        ev.export_sample_path(test.arrival_time, test.labels, mmse, lb, ub, lo, hi, out / f"sample_path_{tag}.csv")
    return _clean(rep.to_dict())


def export_pdfs(model: mdn.MdnModel, out: Path, les_values: Sequence[float] = PDF_LES_VALUES) -> list[dict]:
    """Density of the predicted delay for fixed LES values on a common grid."""
    mixtures = [mdn.predict_distribution(model, np.array([w])) for w in les_values]
    hi = max(max(mu + 4 * s for _, mu, s in m.components()) for m in mixtures)
    grid = np.linspace(0.0, max(hi, 1.0), 401)
    cols = [grid] + [np.array([mx.pdf(m, w) for w in grid]) for m in mixtures]
    header = ["wait"] + [f"w1_{w:g}" for w in les_values]
    with (out / "pdf_h1.csv").open("w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return [{"w1": w, "mixture": m.to_dict()} for w, m in zip(les_values, mixtures)]


def hol_for(test: ds.Dataset, customers: simulator.SimOutput) -> np.ndarray:
    """HOL values joined from the customer table by arrival time."""
    idx = np.searchsorted(customers.arrival_time, test.arrival_time)
    idx = np.minimum(idx, customers.n_arrivals - 1)
    if not np.array_equal(customers.arrival_time[idx], test.arrival_time):
        raise ValueError("test samples do not match the customer file (arrival times differ)")
    return customers.hol[idx]


FIGURE_SETUP = {
    "fig2": ("onoff", "mse"),
    "fig3": ("nhpp", "mse"),
    "fig4": ("nhpp", "mdn"),
    "fig5": ("nhpp", "mdn"),
    "fig6": ("nhpp", "mdn"),
}


def reproduce(figure: str, override: dict, seed: Optional[int], out: Path) -> dict:
    """End-to-end pipeline for one figure; all intermediate files land in ``out``."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {list(FIGURES)}")
    arrival, kind = FIGURE_SETUP[figure]
    preset = {"sim": {"arrival": {"type": arrival}}, "model": {"type": kind}}
    # the figure fixes arrival type and model head unless the config overrides them
    cfg = resolve(_deep_update(preset, override), seed)
    sim = simulate(cfg, out)
    result = {"figure": figure, "config": cfg, "reports": []}
    if kind == "mse":
        for h in SCATTER_HISTORIES:
            train_set, test = make_dataset(sim, cfg, out, h)
            if h == SCATTER_HISTORIES[0]:
                result["reports"].append(evaluate("les", test, cfg, out, "les"))
                result["reports"].append(evaluate("hol", test, cfg, out, "hol", hol=test.hol))
            model = train(train_set, cfg, out, f"mse_h{h}")
            result["reports"].append(evaluate(model, test, cfg, out, f"mse_h{h}"))
    else:
        h = 1 if figure == "fig4" else 50
        train_set, test = make_dataset(sim, cfg, out, h)
        result["reports"].append(evaluate("les", test, cfg, out, "les"))
        model = train(train_set, cfg, out, f"mdn_h{h}")
        result["reports"].append(evaluate(model, test, cfg, out, f"mdn_h{h}"))
        if figure == "fig4":
            result["pdfs"] = export_pdfs(model, out)
    result = _clean(result)
    write_json(result, out / "report.json")
    return result


def _deep_update(base: dict, override: dict) -> dict:
    if not isinstance(override, dict):
        raise ConfigError("configuration must be a JSON object")
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# ---------------------------------------------------------------- argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaymdn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON config (or a report embedding one)")
        sp.add_argument("--seed", type=int, help="overrides sim.seed and model.train.seed")
        sp.add_argument("--out", required=out_required, help="output directory")

    common(sub.add_parser("simulate", help="run the queue simulation and write customers.csv"))

    sp = sub.add_parser("make-dataset", help="extract delay histories and split train/test")
    common(sp)
    sp.add_argument("--customers", required=True, help="customer CSV from simulate")
    sp.add_argument("--h", type=int, help="history length (default: dataset.h)")

    sp = sub.add_parser("train", help="fit an MSE or MDN model")
    common(sp)
    sp.add_argument("--train", required=True, help="training CSV from make-dataset")

    sp = sub.add_parser("evaluate", help="score a model or baseline on a test CSV")
    common(sp)
    sp.add_argument("--model", required=True, help="model JSON, or 'les' / 'hol'")
    sp.add_argument("--test", required=True, help="test CSV from make-dataset")
    sp.add_argument("--customers", help="customer CSV (needed for the HOL baseline)")

    sp = sub.add_parser("reproduce", help="end-to-end pipeline for one figure")
    common(sp)
    sp.add_argument("figure", choices=FIGURES)
    return p


def run_command(args: argparse.Namespace) -> None:
    override = load_config(args.config)
    out = _out_dir(args.out)
    if args.command == "reproduce":
        reproduce(args.figure, override, args.seed, out)
        return
    if args.command == "simulate":
        simulate(resolve(override, args.seed), out)
        return
    if args.command == "make-dataset":
        cfg = resolve(override, args.seed)
        if args.h is not None:
            cfg["dataset"]["h"] = args.h
            validate(cfg)
        sim = simulator.read_csv(args.customers, warmup=cfg["sim"]["warmup"])
        make_dataset(sim, cfg, out)
        write_json({"config": cfg}, out / "dataset.json")
        return
    if args.command == "train":
        cfg = resolve(override, args.seed)
        train_set = ds.read_csv(args.train)
        cfg["dataset"]["h"] = train_set.h
        tag = f"{cfg['model']['type']}_h{train_set.h}"
        train(train_set, cfg, out, tag)
        write_json({"config": cfg}, out / f"train_{tag}.json")
        return
    if args.command == "evaluate":
        cfg = resolve(override, args.seed)
        test = ds.read_csv(args.test)
        hol = None
        if args.customers:
            hol = hol_for(test, simulator.read_csv(args.customers, warmup=cfg["sim"]["warmup"]))
        if args.model in ("les", "hol"):
            model, tag = args.model, args.model
        else:
            model = _read_model(args.model)
            tag = f"{'mse' if isinstance(model, MseModel) else 'mdn'}_h{model.h}"
            if model.h != test.h:
                raise ValueError(f"model expects h={model.h}, test set has h={test.h}")
        cfg["dataset"]["h"] = test.h
        rep = evaluate(model, test, cfg, out, tag, hol=hol)
        write_json({"config": cfg, "reports": [rep]}, out / f"report_{tag}.json")
        return
    raise ConfigError(f"unknown command {args.command!r}")  # pragma: no cover


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run_command(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
