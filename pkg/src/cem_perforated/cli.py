"""Command-line front end.

Exit codes: 0 success, 1 numerical or geometric failure, 2 configuration or
I/O failure.  Failures print a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisBuilder, Variant
from .coarse import build_coarse_grid, kappa_tilde, layers_for
from .config import RunConfig, load_domain, source_on_mesh
from .errors import CemError, ConfigError, GeometryError, NumericalError
from .fem import assemble_system
from .geometry import generate_perforations, triangulate
from .mshio import write_vtk
from .solver import (
    DECAY_FIELDS,
    FineProblem,
    convergence_study,
    decay_study,
    rows_to_csv,
)
from .spectral import build_aux_space

log = logging.getLogger("cem_perforated")


def _parse_layers(text: str):
    if text == "log":
        return "log"
    if "," in text:
        return [int(v) for v in text.split(",") if v]
    return int(text)


def _parse_floats(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        if "/" in part:
            num, den = part.split("/")
            out.append(float(num) / float(den))
        else:
            out.append(float(part))
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config or a previous manifest.json")
    common.add_argument("--variant", choices=["constraint", "relaxed", "both"])
    common.add_argument("--layers", type=_parse_layers, help="int, 'log', or comma list")
    common.add_argument("--eigs", type=int, help="auxiliary functions per block (default 3)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="perforation generator seed")
    common.add_argument("--fine-n", type=int, dest="fine_n", help="fine cells per side")
    common.add_argument("--threads", type=int, help="worker threads for basis construction")
    common.add_argument("--disks", type=int, help="number of generated perforations")
    common.add_argument("--spec", help="domain spec JSON path")
    common.add_argument("--mesh", help="MSH 2.2 mesh path")
    common.add_argument("--H", type=_parse_floats, help="coarse size(s), e.g. 1/16 or 1/8,1/16")
    common.add_argument("--drop-islands", action="store_true", dest="drop_islands",
                        help="keep only the largest connected piece of the mesh")
    common.add_argument("--timing", action="store_true", help="record wall_ms in CSV output")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cem-perf", description="CEM-GMsFEM on perforated domains")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="generate a perforated domain spec")
    g.add_argument("--radius-min", type=float, default=0.01)
    g.add_argument("--radius-max", type=float, default=0.04)
    g.add_argument("--gap", type=float, default=0.005)

    sub.add_parser("mesh-info", parents=[common], help="mesh and coarse grid statistics")
    sub.add_parser("solve", parents=[common], help="fine and multiscale solve with VTK output")

    st = sub.add_parser("study", help="convergence and layer-decay studies")
    ssub = st.add_subparsers(dest="study", required=True)
    ssub.add_parser("convergence", parents=[common], help="errors over an (H, m) schedule")
    d = ssub.add_parser("decay", parents=[common], help="errors versus layers at fixed H")
    d.add_argument("--m-list", type=lambda s: [int(v) for v in s.split(",")], dest="m_list")
    d.add_argument("--no-global", action="store_true", help="skip the global-basis decay column")

    e = sub.add_parser("export-basis", parents=[common], help="write one basis function to VTK")
    e.add_argument("--block", type=int)
    e.add_argument("--eig", type=int)
    return p


def resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.disks is not None or args.seed is not None:
        gen = dict(cfg.domain.get("generate", {}))
        gen.setdefault("count", 50)
        if args.disks is not None:
            gen["count"] = args.disks
        if args.seed is not None:
            gen["seed"] = args.seed
        cfg.domain = {"generate": gen}
    if args.spec:
        cfg.domain = {"spec_path": args.spec}
    if args.mesh:
        cfg.domain = {"msh_path": args.mesh}
    if args.fine_n is not None:
        cfg.fine_n = args.fine_n
    if args.variant:
        cfg.variants = ["constraint", "relaxed"] if args.variant == "both" else [args.variant]
    if args.eigs is not None:
        cfg.eigs = args.eigs
    if args.threads is not None:
        cfg.threads = args.threads
    if args.timing:
        cfg.timing = True
    if args.drop_islands:
        cfg.drop_islands = True
    command = getattr(args, "study", None) or args.command
    if args.H:
        if command == "convergence":
            layers = args.layers if args.layers is not None else "log"
            if isinstance(layers, list):
                if len(layers) != len(args.H):
                    raise ConfigError("--layers list must match the --H list")
                cfg.schedule = [[h, m] for h, m in zip(args.H, layers)]
            else:
                cfg.schedule = [[h, layers] for h in args.H]
        else:
            cfg.H = args.H[0]
    elif args.layers is not None and command == "convergence":
        if isinstance(args.layers, list):
            if len(args.layers) != len(cfg.schedule):
                raise ConfigError("--layers list must match the schedule length")
            cfg.schedule = [[h, m] for (h, _), m in zip(cfg.schedule, args.layers)]
        else:
            cfg.schedule = [[h, args.layers] for h, _ in cfg.schedule]
    if args.layers is not None and command != "convergence":
        cfg.layers = args.layers
    if getattr(args, "m_list", None):
        cfg.m_list = args.m_list
    if getattr(args, "no_global", False):
        cfg.with_global = False
    if getattr(args, "block", None) is not None:
        cfg.basis_block = args.block
    if getattr(args, "eig", None) is not None:
        cfg.basis_eig = args.eig
    cfg.validate()
    return cfg


def _out_dir(args) -> Path:
    out = Path(args.out or "cem_out")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}", str(out)) from exc
    return out


def write_manifest(out: Path, command: str, cfg: RunConfig) -> None:
    manifest = {"command": command, "version": __version__, "config": cfg.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _grid_stats(mesh, H):
    grid = build_coarse_grid(mesh, round(1 / H))
    kap = kappa_tilde(grid)
    return grid, {
        "min_kappa_tilde": float(kap.min()),
        "empty_blocks": int(len(grid.empty_lattice_blocks)),
        **grid.summary(),
    }


def cmd_generate(args) -> int:
    cfg = resolve_config(args)
    gen = cfg.domain.get("generate", {})
    spec = generate_perforations(
        int(gen.get("count", 50)),
        (args.radius_min, args.radius_max),
        args.gap,
        int(gen.get("seed", 42)),
    )
    text = spec.to_json()
    mesh = triangulate(spec, cfg.fine_n, cfg.drop_islands)
    _, gstats = _grid_stats(mesh, cfg.H)
    stats = {**mesh.stats(), **gstats}
    if args.out:
        out = _out_dir(args)
        (out / "domain.json").write_text(text + "\n")
        (out / "mesh_stats.json").write_text(json.dumps(stats, indent=2) + "\n")
    print(text)
    print(json.dumps(stats), file=sys.stderr)
    return 0


def cmd_mesh_info(args) -> int:
    cfg = resolve_config(args)
    _, mesh = load_domain(cfg)
    _, gstats = _grid_stats(mesh, cfg.H)
    print(json.dumps({"mesh": mesh.stats(), "coarse": gstats}, indent=2))
    return 0


def _layers_arg(cfg: RunConfig, n_blocks: int):
    if isinstance(cfg.layers, list):
        if len(cfg.layers) != n_blocks:
            raise ConfigError(f"per-block layers list has {len(cfg.layers)} entries, need {n_blocks}")
        return np.asarray(cfg.layers, dtype=np.int64)
    return layers_for(cfg.layers, cfg.H)


def cmd_solve(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    _, mesh = load_domain(cfg)
    f = source_on_mesh(mesh, cfg.source)
    problem = FineProblem(mesh, f)
    write_vtk(out / "u_h.vtk", mesh, {"u_h": problem.u_h})
    builder = problem.builder(cfg.H, cfg.eigs)
    layers = _layers_arg(cfg, builder.grid.n_blocks)
    fields, rows = {}, []
    for variant in cfg.variants:
        sol, basis = problem.solve(cfg.H, layers, cfg.eigs, variant, cfg.threads)
        fields[f"u_ms_{variant}"] = sol.u_ms
        rows.append(
            {
                "H": cfg.H,
                "m": layers if np.isscalar(layers) else "per-block",
                "variant": variant,
                "l": cfg.eigs,
                "e_L2": sol.e_L2,
                "e_H1": sol.e_H1,
                "n_fine_dofs": problem.n_fine_dofs,
                "n_ms_dofs": basis.size,
            }
        )
        log.info("%s: e_L2=%.3e e_H1=%.3e", variant, sol.e_L2, sol.e_H1)
    write_vtk(out / "u_ms.vtk", mesh, fields)
    (out / "errors.csv").write_text(rows_to_csv(rows))
    write_manifest(out, "solve", cfg)
    print(rows_to_csv(rows), end="")
    return 0


def cmd_study(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    _, mesh = load_domain(cfg)
    problem = FineProblem(mesh, source_on_mesh(mesh, cfg.source))
    if args.study == "convergence":
        rows = convergence_study(
            problem, cfg.schedule, cfg.eigs, cfg.variants, cfg.threads, cfg.timing
        )
        text = rows_to_csv(rows)
        (out / "convergence.csv").write_text(text)
    else:
        rows = decay_study(
            problem, cfg.H, cfg.eigs, cfg.variants, cfg.m_list, cfg.threads, cfg.timing,
            cfg.with_global,
        )
        text = rows_to_csv(rows, DECAY_FIELDS)
        (out / "decay.csv").write_text(text)
    write_manifest(out, f"study {args.study}", cfg)
    print(text, end="")
    return 0


def cmd_export_basis(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args)
    _, mesh = load_domain(cfg)
    system = assemble_system(mesh, 0.0)
    grid = build_coarse_grid(mesh, round(1 / cfg.H))
    aux = build_aux_space(grid, kappa_tilde(grid), cfg.eigs)
    builder = BasisBuilder(system, grid, aux)
    i, j = cfg.basis_block, cfg.basis_eig
    if not 0 <= i < grid.n_blocks:
        raise ConfigError(f"block {i} outside 0..{grid.n_blocks - 1}")
    if not 0 <= j < aux.counts[i]:
        raise ConfigError(f"eigen index {j} outside 0..{aux.counts[i] - 1}")
    layers = _layers_arg(cfg, grid.n_blocks)
    m = int(layers if np.isscalar(layers) else layers[i])
    fields = {}
    for variant in cfg.variants:
        psi = builder.block_functions(i, m, Variant(variant))[j]
        fields[f"psi_{variant}"] = system.dof_map.expand(psi.dense(builder.n_free))
    path = out / f"basis_{i}_{j}.vtk"
    write_vtk(path, mesh, fields)
    write_manifest(out, "export-basis", cfg)
    print(str(path))
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "mesh-info": cmd_mesh_info,
    "solve": cmd_solve,
    "study": cmd_study,
    "export-basis": cmd_export_basis,
}


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    path = getattr(exc, "path", None)
    if path:
        payload["path"] = path
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(exc, 2)
    except (NumericalError, GeometryError) as exc:
        return _fail(exc, 1)
    except CemError as exc:
        return _fail(exc, 1)
    except OSError as exc:
        exc.path = exc.filename
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
