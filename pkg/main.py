import argparse
import atexit
import sys
from pathlib import Path
from typing import List, Optional

from loguru import logger

from src.HeteroTrack.assignment import BoundMode
from src.HeteroTrack.config_manager import load_config, save_config
from src.HeteroTrack.errors import EXIT_CODES, ConfigError, exit_code_for
from src.HeteroTrack.harness import Policy, compare_policies, run, run_bound_experiment, write_comparison, write_outputs
from src.HeteroTrack.process_manager import cleanup_on_exit, default_worker_count
from src.HeteroTrack.scenario import ScenarioConfig

# --- atexit 清理注册 --- #
atexit.register(cleanup_on_exit)

LOG_FORMAT = "<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <level>{message}</level>"


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="HeteroTrack - 异构机器人多目标跟踪分配仿真")
    parser.add_argument("--log-level", default="INFO", help="控制台日志级别 (DEBUG/INFO/WARNING/ERROR)")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="运行一次闭环仿真")
    run_parser.add_argument("--config", type=Path, default=None, help="场景配置文件 (缺省使用默认参数)")
    run_parser.add_argument("--policy", choices=[p.value for p in Policy], default=Policy.GREEDY.value)
    run_parser.add_argument("--seed", type=int, default=None, help="覆盖配置文件中的随机种子")
    run_parser.add_argument("--out", type=Path, default=Path("out"), help="输出目录")

    compare_parser = commands.add_parser("compare", help="贪心与最优分配的质量比较")
    compare_parser.add_argument("--config", type=Path, default=None, help="场景配置文件 (缺省使用默认参数)")
    compare_parser.add_argument("--seeds", type=int, default=50, help="种子数量 (从配置中的 seed 开始连续编号)")
    compare_parser.add_argument("--workers", type=int, default=None, help="并行进程数 (默认按物理核心数)")
    compare_parser.add_argument("--out", type=Path, default=Path("out"), help="输出目录")

    bounds_parser = commands.add_parser("bounds", help="随机质量表上的近似界验证")
    bounds_parser.add_argument("--mode", choices=[m.value for m in BoundMode], default=BoundMode.SUBMODULAR.value)
    bounds_parser.add_argument("--instances", type=int, default=200, help="随机实例数量")
    bounds_parser.add_argument("--seed", type=int, default=0)

    return parser.parse_args(argv)


def setup_logging(level: str, out_dir: Optional[Path] = None) -> Optional[int]:
    """stderr sink at ``level``; with an output directory also a DEBUG file sink (its id is returned)."""
    logger.remove()
    logger.add(sys.stderr, level=level.upper(), format=LOG_FORMAT)
    if out_dir is None:
        return None
    out_dir.mkdir(parents=True, exist_ok=True)
    return logger.add(out_dir / "run.log", level="DEBUG", encoding="utf-8")


def _load(config_path: Optional[Path]) -> ScenarioConfig:
    if config_path is None:
        logger.info("[main] 未指定配置文件, 使用默认参数")
        return ScenarioConfig().validate()
    return load_config(config_path)


def cmd_run(args: argparse.Namespace):
    config = _load(args.config)
    if args.seed is not None:
        config.seed = args.seed
        config.validate()
    save_config(config, args.out / "config.toml")
    records, summary = run(config, args.policy)
    write_outputs(records, summary, args.out)
    for target_id, by_step in summary.rmse.items():
        logger.info(f"[main] 目标 {target_id} RMSE: " + ", ".join(f"k={k}: {v:.4f}" for k, v in by_step.items()))


def cmd_compare(args: argparse.Namespace):
    config = _load(args.config)
    save_config(config, args.out / "config.toml")
    seeds = range(config.seed, config.seed + args.seeds)
    workers = args.workers if args.workers is not None else default_worker_count()
    result = compare_policies(config, seeds, workers)
    write_comparison(result, args.out)


def cmd_bounds(args: argparse.Namespace):
    report = run_bound_experiment(args.mode, args.instances, args.seed)
    logger.info(
        f"[main] {report.mode.value}: {report.instances} 个实例, 最小比值 {report.min_ratio:.6g}, "
        f"平均 {report.mean_ratio:.6g}, 最多评估 {report.max_evaluations} 次"
    )


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "bounds": cmd_bounds}


def global_exception_handler(exc_type, value, traceback):
    """全局异常处理器, 未捕获的异常统一经 loguru 记录"""
    logger.opt(exception=(exc_type, value, traceback)).error(f"未捕获的异常: {exc_type.__name__}: {value}")


def main(argv: Optional[List[str]] = None) -> int:
    sys.excepthook = global_exception_handler
    try:
        args = parse_args(argv)
    except SystemExit as e:
        # argparse 用法错误按配置错误处理, --help 正常退出
        return 0 if not e.code else EXIT_CODES[ConfigError]
    file_sink = setup_logging(args.log_level, getattr(args, "out", None))
    try:
        COMMANDS[args.command](args)
    except Exception as e:
        code = exit_code_for(e)
        if code == 1:
            logger.exception(f"[main] 命令 {args.command} 失败: {e}")
        else:
            logger.error(f"[main] 命令 {args.command} 失败 (退出码 {code}): {e}")
        return code
    finally:
        if file_sink is not None:
            logger.remove(file_sink)
    return 0


if __name__ == "__main__":
    sys.exit(main())
