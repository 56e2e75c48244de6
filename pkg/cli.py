#!/usr/bin/env python3
"""
导引波弛豫模拟器命令行

    python cli.py run --config scenarios/relax.cfg --out runs/relax
    python cli.py sweep --config scenarios/reversal_wave_only.cfg --param alpha --values 0,0.25,0.5 --out runs/sweep
    python cli.py check
    python cli.py plot --run runs/relax

退出码：0 成功，1 校验未通过，2 配置错误，3 数值中止
"""
import argparse
import sys
from typing import List, Optional

from utils.logger import logger
from core.exceptions import ConfigurationError, InvalidDensityError, NumericalAbort
from core.scenario import ExperimentKind, ScenarioConfig, load_scenario

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _add_overrides(parser: argparse.ArgumentParser):
    parser.add_argument('--seed', type=int, help='覆盖 ensemble.seed')
    parser.add_argument('--steps', type=int, help='覆盖 time.steps')
    parser.add_argument('--dt', type=float, help='覆盖 time.dt')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pilotwave', description='导引波弛豫模拟器')
    sub = parser.add_subparsers(dest='command', required=True)

    run = sub.add_parser('run', help='运行一个场景')
    run.add_argument('--config', required=True, help='场景文件')
    run.add_argument('--out', help='输出目录（默认 OUTPUT.directory 下按时间命名）')
    _add_overrides(run)

    sweep = sub.add_parser('sweep', help='参数扫描')
    sweep.add_argument('--config', required=True, help='场景文件')
    sweep.add_argument('--param', default='alpha', help='扫描参数（目前只支持 alpha）')
    sweep.add_argument('--values', required=True, help='逗号分隔的取值，例如 0,0.25,0.5')
    sweep.add_argument('--out', required=True, help='输出目录，每个取值一个子目录')
    sweep.add_argument('--jobs', type=int, help='并行进程数（默认 SWEEP.n_jobs）')
    _add_overrides(sweep)

    check = sub.add_parser('check', help='运行内置校验')
    check.add_argument('--seed', type=int, default=2024)
    check.add_argument('--trials', type=int, default=1000)

    plot = sub.add_parser('plot', help='从运行目录绘制 PNG')
    plot.add_argument('--run', required=True, help='运行目录')
    return parser


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(args.config)
    return cfg.with_overrides(seed=args.seed, steps=args.steps, dt=args.dt)


def cmd_run(args) -> int:
    from core.experiments import reversal_experiment, run_scenario
    from core.storage import RunStorage

    cfg = _load(args)
    storage = RunStorage(args.out)
    try:
        if cfg.experiment.kind is ExperimentKind.REVERSAL:
            report = reversal_experiment(cfg)
            storage.write_reversal_run(cfg, report)
            print(f"retrace_l2_error = {report.retrace_l2_error:.6e}")
            print(f"retrace_rho_error = {report.retrace_rho_error:.6e}")
        else:
            result = run_scenario(cfg)
            storage.write_run(cfg, result)
            monitors = result.monitors
            print(f"h_q: {monitors['h_q'].iloc[0]:.6e} -> {monitors['h_q'].iloc[-1]:.6e}")
            print(f"norm: {monitors['norm'].iloc[-1]:.12f}")
    except NumericalAbort as e:
        storage.write_aborted(cfg, e, e.snapshot)
        raise
    print(f"输出目录: {storage.run_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from core.experiments import alpha_sweep
    from core.storage import RunStorage

    if args.param != 'alpha':
        raise ConfigurationError(f"不支持的扫描参数: {args.param}", source='--param')
    try:
        values = [float(v) for v in args.values.split(',') if v.strip()]
    except ValueError as e:
        raise ConfigurationError(f"无法解析扫描取值: {args.values}", source='--values') from e
    if not values:
        raise ConfigurationError("扫描取值为空", source='--values')

    cfg = _load(args)
    summary = alpha_sweep(cfg, values, n_jobs=args.jobs, out_dir=args.out)
    storage = RunStorage(args.out)
    storage.write_csv(summary, 'sweep.csv')
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_check(args) -> int:
    from core.oracles import OracleSuite

    results = OracleSuite(seed=args.seed, trials=args.trials).run()
    print(results[['name', 'passed', 'value', 'tolerance']].to_string(index=False))
    failed = int((~results['passed']).sum())
    print(f"{len(results) - failed}/{len(results)} 项通过")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def cmd_plot(args) -> int:
    from core.visualization import RunPlotter

    paths = RunPlotter(args.run).plot_all()
    for path in paths:
        print(path)
    return EXIT_OK


COMMANDS = {
    'run': cmd_run,
    'sweep': cmd_sweep,
    'check': cmd_check,
    'plot': cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口，返回退出码"""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error(f"配置错误: {e.located()}")
        print(f"配置错误: {e.located()}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidDensityError as e:
        logger.error(f"初始密度无效: {e}")
        print(f"配置错误: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as e:
        logger.error(f"数值中止: {e}")
        print(f"数值中止: {e}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == '__main__':
    sys.exit(main())
