"""Command-line interface.

Every command reads parameters from ``--config`` (a flat YAML file) and
per-parameter flags, which take precedence.  Primary results go to
``--out`` (stdout when omitted); progress and timing go to the log on
stderr, so identical invocations produce byte-identical outputs.

Exit codes: 0 success, 2 input or configuration error, 3 numerical failure.
"""

import argparse
import csv
import io
import logging
import sys

import numpy as np

from .centrality import degree_centrality, eigenvector_centrality, katz_centrality
from .config import Param, load_config_file, resolve
from .errors import NumericalError, ValidationError
from .experiments import (STRATEGIES, VaccineSettings, baseline_kernel, fullgp_baseline,
                          noise_experiment, reduction, vaccine_experiment)
from .io import (dump_json, load_attributes, load_graph, load_json, load_observations,
                 write_attributes, write_graph, write_observations)
from .metrics import kendall_tau, pearson_r, spearman_rho, topk_overlap
from .netgen import (ContactPopulationSpec, LinkSpec, NoiseSpec, gen_attribute_graph, gen_ba,
                     gen_contact_population, gen_er, sample_contact_observations,
                     sample_observations)
from .optimize import OptimizerConfig
from .sparse_gp import KernelConfig
from .vbc import VbcPriors, fit_vbc
from .vbcgp import VbcGpPosterior, fit_vbcgp, predict_centrality

log = logging.getLogger("vbcentrality")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3

PRIOR_PARAMS = [
    Param("node_mu", float, 0.0, "prior mean of log-centralities"),
    Param("node_var", float, 10.0, "prior variance of log-centralities"),
    Param("mu_lambda", float, 0.0, "prior mean of the log-eigenvalue"),
    Param("var_lambda", float, 10.0, "prior variance of the log-eigenvalue"),
]
OPTIMIZER_PARAMS = [
    Param("max_iter", int, 2000, "conjugate-gradient iteration limit"),
    Param("rel_tol", float, 1e-8, "relative bound-change tolerance"),
]

COMMANDS = {
    "centrality": [
        Param("method", str, "eigen", "centrality measure", ("degree", "eigen", "katz")),
        Param("katz_a", float, None, "Katz attenuation factor"),
        Param("katz_b", float, 1.0, "Katz exogenous term"),
        Param("direction", str, "in", "degree direction", ("in", "out")),
        Param("undirected", bool, False, "treat the graph as undirected"),
        Param("normalization", str, "unit-l2", "score scaling", ("unit-l2", "unit-sum", "raw")),
    ],
    "metrics": [Param("k", int, 10, "top-k size")],
    "fit-vbc": PRIOR_PARAMS + OPTIMIZER_PARAMS + [
        Param("tied_noise", bool, True, "one noise variance shared by all nodes"),
        Param("restrict_to_scc", bool, False, "fit on the largest strongly connected component"),
    ],
    "fit-vbcgp": PRIOR_PARAMS + OPTIMIZER_PARAMS + [
        Param("num_inducing", int, 10, "number of inducing inputs"),
        Param("kernel", str, "se", "kernel family", ("se", "ard")),
        Param("lengthscale", float, 1.0, "initial lengthscale (standardised attributes)"),
        Param("amplitude", float, 1.0, "initial kernel amplitude"),
        Param("hyper_init", str, "fixed", "hyperparameter start", ("fixed", "baseline")),
        Param("optimize_inducing", bool, False, "also optimise inducing locations"),
        Param("restrict_to_scc", bool, False, "fit on the largest strongly connected component"),
    ],
    "predict": [],
    "fullgp-baseline": [
        Param("train_fraction", float, 0.8, "fraction of nodes used for training"),
        Param("noise_var", float, None, "fixed observation noise (optimised when omitted)"),
    ],
    "exp-noise": OPTIMIZER_PARAMS + [
        Param("networks", str, None, "network specs kind:n:param", is_list=True),
        Param("sigma2", float, [1.0, 5.0, 10.0], "log-normal noise levels", is_list=True),
        Param("samples", int, list(range(1, 11)), "samples per node", is_list=True),
        Param("seeds", int, 15, "repetitions per setting"),
        Param("top", int, 10, "top-k overlap size"),
    ],
    "exp-vaccine": OPTIMIZER_PARAMS + [
        Param("networks", int, 3, "training populations"),
        Param("train_households", int, 100, "households per training population"),
        Param("test_households", int, 550, "households in the test population"),
        Param("observation_rounds", int, 5, "noisy observations per contact"),
        Param("observation_variance", float, 0.5, "truncated-normal observation variance"),
        Param("num_inducing", int, 40, "number of inducing inputs"),
        Param("vaccinate_fraction", float, 0.3, "fraction of nodes vaccinated"),
        Param("runs", int, 100, "simulations per strategy and network"),
        Param("p_transmit", float, 0.5, "per-contact transmission probability"),
        Param("p_recover", float, 0.1, "per-step recovery probability"),
        Param("initial_fraction", float, 0.01, "initially infected fraction"),
        Param("horizon", int, 365, "maximum simulated steps"),
        Param("init_lengthscale", float, 1.0, "initial ARD lengthscale"),
        Param("hyper_init", str, "baseline", "hyperparameter start", ("fixed", "baseline")),
        Param("strategies", str, ["none", "random", "vbcgp"], "vaccination strategies",
              is_list=True),
    ],
    "gen": [
        Param("kind", str, "er", "generator", ("er", "ba", "attr", "contact")),
        Param("n", int, 50, "number of nodes (er, ba, attr)"),
        Param("p", float, 0.2, "edge probability (er)"),
        Param("m", int, 3, "edges per new node (ba)"),
        Param("d", int, 3, "attribute dimension (attr)"),
        Param("link_lengthscale", float, 0.4, "link-function lengthscale (attr)"),
        Param("link_threshold", float, 0.05, "weight threshold (attr)"),
        Param("households", int, 100, "households (contact)"),
        Param("sigma2", float, None, "log-normal observation noise; omit for no observations"),
        Param("samples", int, 1, "observation rounds"),
        Param("contact_variance", float, 0.5, "truncated-normal variance (contact observations)"),
    ],
}

POSITIONALS = {
    "centrality": [("graph", "edge file (from,to,weight)")],
    "metrics": [("candidate", "scores JSON"), ("reference", "scores JSON")],
    "fit-vbc": [("observations", "edge-observation file")],
    "fit-vbcgp": [("observations", "edge-observation file"), ("attributes", "attribute file")],
    "predict": [("model", "model JSON from fit-vbcgp"), ("attributes", "attribute file")],
    "fullgp-baseline": [("observations", "edge-observation file"),
                        ("attributes", "attribute file")],
    "exp-noise": [],
    "exp-vaccine": [],
    "gen": [],
}

EXTRA_FLAGS = {
    "fit-vbc": [("--reference", "noise-free graph file; report Kendall tau against it")],
    "exp-vaccine": [("--summary", "write the summary JSON here (stdout when omitted)")],
    "gen": [("--observations", "write sampled observations here"),
            ("--attributes", "write node attributes here")],
}


# ---------------------------------------------------------------------------
# helpers


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        try:
            with open(out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise ValidationError(f"cannot write {out}: {exc}") from exc


def _scores(index, values):
    return {label: float(v) for label, v in zip(index.labels, values)}


def _priors(cfg):
    return VbcPriors(cfg.node_mu, cfg.node_var, cfg.mu_lambda, cfg.var_lambda)


def _optimizer(cfg):
    return OptimizerConfig(max_iter=cfg.max_iter, rel_tol=cfg.rel_tol)


def _csv(header, rows):
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(header)
    out.writerows(rows)
    return buf.getvalue()


def _g(x):
    return repr(float(x))


def _load_scores(path):
    doc = load_json(path)
    scores = doc.get("scores") if isinstance(doc, dict) else None
    if not isinstance(scores, dict) or not scores:
        raise ValidationError(f"{path}: expected a JSON object with a 'scores' mapping")
    return scores


# ---------------------------------------------------------------------------
# commands


def cmd_centrality(args, cfg):
    g, index = load_graph(args.graph, directed=not cfg.undirected)
    eigenvalue = None
    if cfg.method == "degree":
        vec = degree_centrality(g, cfg.direction)
    elif cfg.method == "eigen":
        vec = eigenvector_centrality(g)
        eigenvalue = vec.eigenvalue
    else:
        if cfg.katz_a is None:
            raise ValidationError("katz needs --katz-a")
        vec = katz_centrality(g, cfg.katz_a, cfg.katz_b)
    vec = vec.normalized(cfg.normalization)
    doc = {"method": cfg.method, "normalization": cfg.normalization,
           "scores": _scores(index, vec.values)}
    if eigenvalue is not None:
        doc["eigenvalue"] = float(eigenvalue)
    _emit(dump_json(doc), args.out)


def cmd_metrics(args, cfg):
    cand = _load_scores(args.candidate)
    ref = _load_scores(args.reference)
    if set(cand) != set(ref):
        raise ValidationError("score files cover different nodes")
    labels = sorted(ref)
    a = np.array([cand[k] for k in labels], dtype=float)
    b = np.array([ref[k] for k in labels], dtype=float)
    if not 1 <= cfg.k <= len(labels):
        raise ValidationError(f"k must lie in [1, {len(labels)}]")
    doc = {"n": len(labels), "kendall": kendall_tau(a, b), "pearson": pearson_r(a, b),
           "spearman": spearman_rho(a, b), "k": cfg.k, "topk": topk_overlap(a, b, cfg.k)}
    _emit(dump_json(doc), args.out)


def cmd_fit_vbc(args, cfg):
    data, index = load_observations(args.observations)
    post, report = fit_vbc(data, _priors(cfg), config=_optimizer(cfg), tied_noise=cfg.tied_noise,
                           restrict_to_scc=cfg.restrict_to_scc)
    labels = index.labels if report.node_map is None else [index.labels[i] for i in report.node_map]
    doc = {"model": "vbc", "nodes": labels, "posterior": post.to_dict(),
           "report": report.to_dict(),
           "scores": {lab: float(c) for lab, c in zip(labels, post.centralities())}}
    log.info("L2 bound %.6g after %d iterations (%.2fs)", report.bound, report.iterations,
             report.wall_time)
    if args.reference:
        g_ref, ref_index = load_graph(args.reference)
        ref = eigenvector_centrality(g_ref).values
        try:
            ref_vals = np.array([ref[ref_index[lab]] for lab in labels])
        except ValidationError:
            raise ValidationError("reference graph does not cover the observed nodes") from None
        tau = kendall_tau(post.centralities(), ref_vals)
        doc["reference_kendall"] = tau
        log.info("Kendall tau vs reference: %.4f", tau)
    _emit(dump_json(doc), args.out)


def cmd_fit_vbcgp(args, cfg):
    data, index = load_observations(args.observations, args.attributes)
    d = data.attributes.shape[1]
    if cfg.hyper_init == "baseline":
        kernel = baseline_kernel(data, cfg.kernel, cfg.lengthscale)
    elif cfg.kernel == "ard":
        kernel = KernelConfig.ard([cfg.lengthscale] * d, cfg.amplitude)
    else:
        kernel = KernelConfig.se(cfg.lengthscale, cfg.amplitude)
    post, report = fit_vbcgp(data, _priors(cfg), kernel, cfg.num_inducing, _optimizer(cfg),
                             seed=args.seed, restrict_to_scc=cfg.restrict_to_scc,
                             optimize_inducing=cfg.optimize_inducing)
    labels = index.labels if report.node_map is None else [index.labels[i] for i in report.node_map]
    doc = {"model": "vbcgp", "nodes": labels, "posterior": post.to_dict(),
           "report": report.to_dict(),
           "scores": {lab: float(c) for lab, c in zip(labels, post.centralities())}}
    log.info("L4 bound %.6g after %d iterations (%.2fs)", report.bound, report.iterations,
             report.wall_time)
    _emit(dump_json(doc), args.out)


def cmd_predict(args, cfg):
    doc = load_json(args.model)
    if not isinstance(doc, dict) or doc.get("model") != "vbcgp" or "posterior" not in doc:
        raise ValidationError(f"{args.model} is not a VBC-GP model file")
    try:
        post = VbcGpPosterior.from_dict(doc["posterior"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed model file: {exc}") from exc
    x, index = load_attributes(args.attributes)
    if x.shape[1] != post.gp.dim:
        raise ValidationError(f"model expects {post.gp.dim} attributes, file has {x.shape[1]}")
    pred = predict_centrality(post, x)
    nodes = {lab: {"location": float(a), "scale2": float(s), "mean": float(m)}
             for lab, a, s, m in zip(index.labels, pred.location, pred.scale2, pred.mean)}
    out = {"model": args.model, "predictions": nodes,
           "scores": _scores(index, pred.location),
           "summary_mean": float(np.mean(pred.mean))}
    _emit(dump_json(out), args.out)


def cmd_fullgp(args, cfg):
    if not 0 < cfg.train_fraction <= 1:
        raise ValidationError("train_fraction must lie in (0, 1]")
    if cfg.noise_var is not None and cfg.noise_var < 0:
        raise ValidationError("noise_var must be non-negative")
    data, index = load_observations(args.observations, args.attributes)
    pred, train = fullgp_baseline(data, cfg.train_fraction, args.seed, cfg.noise_var)
    doc = {"model": "fullgp", "train_nodes": [index.labels[i] for i in train],
           "log_centrality": _scores(index, pred), "scores": _scores(index, np.exp(pred))}
    _emit(dump_json(doc), args.out)


def cmd_exp_noise(args, cfg):
    if not cfg.networks:
        raise ValidationError("exp-noise needs at least one network spec (key 'networks')")
    if cfg.seeds < 1 or min(cfg.samples) < 1:
        raise ValidationError("seeds and samples must be positive")
    rows = noise_experiment(cfg.networks, tuple(cfg.sigma2), tuple(sorted(set(cfg.samples))),
                            cfg.seeds, args.seed, _optimizer(cfg), cfg.top)
    header = ["network", "sigma2", "Ns", "seed", "method", "kendall", "top10"]
    _emit(_csv(header, [[r["network"], _g(r["sigma2"]), r["Ns"], r["seed"], r["method"],
                         _g(r["kendall"]), _g(r["top10"])] for r in rows]), args.out)


def cmd_exp_vaccine(args, cfg):
    bad = sorted(set(cfg.strategies) - set(STRATEGIES))
    if bad:
        raise ValidationError(f"unknown strategies: {bad}")
    keys = [f for f in VaccineSettings.__dataclass_fields__ if f in cfg.values]
    settings = VaccineSettings(**{k: cfg.values[k] for k in keys if k != "strategies"},
                               strategies=tuple(cfg.strategies))
    res = vaccine_experiment(settings, root_seed=args.seed, optimizer=_optimizer(cfg))
    rows = []
    summary = {"settings": {k: (list(v) if isinstance(v, tuple) else v)
                            for k, v in settings.__dict__.items()}}
    for split in ("train", "test"):
        if split not in res:
            continue
        sm = res[split]["summaries"]
        strategies = {}
        for name, s in sm.items():
            strategies[name] = s.to_dict()
            if "none" in sm:
                strategies[name]["reduction"] = reduction(sm, name)
        summary[split] = {"n": res[split]["n"], "edges": res[split]["edges"],
                          "vaccinated": res[split]["k"], "strategies": strategies}
        for name, s in sm.items():
            for t, (si, ii, ri) in enumerate(zip(s.mean_susceptible, s.mean_infected,
                                                 s.mean_recovered)):
                rows.append([split, name, t, _g(si), _g(ii), _g(ri)])
    summary["fits"] = [r.to_dict() for r in res["reports"]]
    if args.out:
        _emit(_csv(["split", "strategy", "step", "susceptible", "infected", "recovered"], rows),
              args.out)
    _emit(dump_json(summary), args.summary)


def cmd_gen(args, cfg):
    if args.out is None:
        raise ValidationError("gen needs --out for the graph file")
    x = None
    if cfg.kind == "er":
        g = gen_er(cfg.n, cfg.p, args.seed)
    elif cfg.kind == "ba":
        g = gen_ba(cfg.n, cfg.m, args.seed)
    elif cfg.kind == "attr":
        g, x = gen_attribute_graph(cfg.n, cfg.d, LinkSpec(cfg.link_lengthscale, cfg.link_threshold),
                                   args.seed)
    else:
        g, x, _ = gen_contact_population(ContactPopulationSpec(households=cfg.households),
                                         args.seed)
    write_graph(args.out, g)
    if args.attributes:
        if x is None:
            raise ValidationError(f"generator '{cfg.kind}' has no node attributes")
        write_attributes(args.attributes, x)
    if args.observations:
        if cfg.kind == "contact":
            data = sample_contact_observations(g, args.seed + 1, cfg.samples, cfg.contact_variance)
        else:
            if cfg.sigma2 is None:
                raise ValidationError("observations need --sigma2")
            data = sample_observations(g, NoiseSpec(cfg.sigma2, cfg.samples, args.seed + 1))
        write_observations(args.observations, data)
    log.info("generated %s graph: %d nodes, %d edges", cfg.kind, g.n, g.num_edges)


COMMAND_HELP = {
    "centrality": "degree, eigenvector or Katz centrality of a graph file",
    "metrics": "compare two score files (Kendall, Pearson, Spearman, top-k)",
    "fit-vbc": "fit the VBC posterior to edge observations",
    "fit-vbcgp": "fit the VBC-GP model to edge observations and node attributes",
    "predict": "predict centralities from a VBC-GP model and attributes",
    "fullgp-baseline": "averaged-weight centralities mapped by a dense GP",
    "exp-noise": "noisy-edge experiment; tidy CSV of scores",
    "exp-vaccine": "vaccination case study; trajectories CSV and summary JSON",
    "gen": "generate a network, optionally with attributes and observations",
}

HANDLERS = {
    "centrality": cmd_centrality,
    "metrics": cmd_metrics,
    "fit-vbc": cmd_fit_vbc,
    "fit-vbcgp": cmd_fit_vbcgp,
    "predict": cmd_predict,
    "fullgp-baseline": cmd_fullgp,
    "exp-noise": cmd_exp_noise,
    "exp-vaccine": cmd_exp_vaccine,
    "gen": cmd_gen,
}


# ---------------------------------------------------------------------------
# entry point


def _global_flags(suppress):
    # subcommands repeat the global flags without defaults so they never mask earlier values
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML file of parameters",
                        **(kw or {"default": None}))
    common.add_argument("--seed", type=int, help="root random seed", **(kw or {"default": 0}))
    common.add_argument("--out", help="output file (stdout when omitted)",
                        **(kw or {"default": None}))
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors",
                        **(kw or {"default": False}))
    return common


def build_parser():
    parser = argparse.ArgumentParser(prog="vbcentrality", parents=[_global_flags(False)],
                                     description="Bayesian network centrality tools.")
    sub = parser.add_subparsers(dest="command", required=True)
    local = _global_flags(True)
    for name, params in COMMANDS.items():
        p = sub.add_parser(name, parents=[local], help=COMMAND_HELP[name])
        for pos, help_text in POSITIONALS[name]:
            p.add_argument(pos, help=help_text)
        for flag, help_text in EXTRA_FLAGS.get(name, []):
            p.add_argument(flag, help=help_text)
        for param in params:
            p.add_argument(param.flag, dest=param.name, default=None, help=param.help)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        params = COMMANDS[args.command]
        flags = {p.name: getattr(args, p.name) for p in params}
        cfg = resolve(args.command, params, load_config_file(args.config), flags,
                      args.config or "config")
        HANDLERS[args.command](args, cfg)
    except ValidationError as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except NumericalError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
