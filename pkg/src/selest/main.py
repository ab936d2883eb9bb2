"""
Ponto de entrada de linha de comando do Selest.

Cada subcomando resolve a configuração (padrão < preset < arquivo < flags),
configura o logging, executa o seu passo do pipeline e grava a configuração
resolvida ao lado das saídas.

Exemplo de uso:
    ```
    selest gen-data --out runs/a --n 20000 --d 16
    selest gen-workload --dataset runs/a/dataset.vecd --out runs/a
    selest train --dataset runs/a/dataset.vecd --workload runs/a/workload.jsonl --preset desk --out runs/a
    echo '{"x": [0, 0, ...], "t": 1.5}' | selest estimate --model runs/a/model.seln
    ```

Códigos de saída: 0 sucesso, 1 falha de validação/faixa/arquivo, 2 erro de uso.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

from selest import __version__
from selest.application.services.evaluation_service import EvaluationService
from selest.application.services.toy_demo_service import ToyDemoService
from selest.application.services.update_service import UpdateService, generate_update_stream
from selest.application.services.workload_service import WorkloadService, gen_synthetic, selectivity_targets
from selest.config import PRESETS, SelestSettings, resolve_settings, save_config, set_config
from selest.core.estimator import SelNetModel
from selest.core.exceptions import SelestError
from selest.core.partition import build_layout, layout_to_dict
from selest.core.trainer import pretrain_autoencoder, train
from selest.infrastructure.concurrency import ConcurrencyService
from selest.infrastructure.dataset_io import load_dataset, load_fvecs, load_text_vectors, save_dataset
from selest.infrastructure.file_system import atomic_write_text
from selest.infrastructure.logging_config import get_logger, setup_logging
from selest.infrastructure.model_store import load_model, save_model
from selest.infrastructure.workload_io import (
    load_update_stream,
    load_workload,
    parse_estimate_request,
    save_jsonl,
    save_update_stream,
    save_workload,
)

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RESOLVED_CONFIG_NAME = "resolved_config.json"

# (flag, tipo, chaves "secao.chave" afetadas)
OVERRIDE_FLAGS = (
    ("--n", int, ("data.n",)),
    ("--d", int, ("data.d",)),
    ("--components", int, ("data.components",)),
    ("--distance", str, ("data.distance",)),
    ("--data-seed", int, ("data.seed",)),
    ("--queries", int, ("workload.queries",)),
    ("--targets", int, ("workload.targets",)),
    ("--max-fraction", float, ("workload.max_fraction",)),
    ("--eval-thresholds", int, ("workload.eval_thresholds",)),
    ("--noise-std", float, ("workload.noise_std",)),
    ("--train-fraction", float, ("workload.train_fraction",)),
    ("--t-max-mode", str, ("workload.t_max_mode",)),
    ("--t-max", float, ("workload.t_max",)),
    ("--workload-seed", int, ("workload.seed",)),
    ("--L", int, ("model.L",)),
    ("--K", int, ("model.K",)),
    ("--r", float, ("model.r",)),
    ("--partition-method", str, ("model.partition_method",)),
    ("--z-dim", int, ("model.z_dim",)),
    ("--h-dim", int, ("model.h_dim",)),
    ("--lr", float, ("model.learning_rate",)),
    ("--batch", int, ("model.batch_size",)),
    ("--lambda-ae", float, ("model.lambda_ae",)),
    ("--beta", float, ("model.beta_joint",)),
    ("--seed", int, ("model.seed", "training.seed")),
    ("--max-epochs", int, ("training.max_epochs",)),
    ("--patience", int, ("training.patience",)),
    ("--pretrain-epochs", int, ("training.pretrain_epochs",)),
    ("--ae-pretrain-epochs", int, ("training.ae_pretrain_epochs",)),
    ("--strategy", str, ("training.strategy",)),
    ("--monitor", str, ("training.monitor",)),
    ("--delta-u", float, ("updates.delta_u",)),
    ("--update-steps", int, ("updates.steps",)),
    ("--update-batch", int, ("updates.batch_records",)),
    ("--update-max-epochs", int, ("updates.max_epochs",)),
    ("--update-patience", int, ("updates.patience",)),
    ("--update-seed", int, ("updates.seed",)),
    ("--threads", int, ("runtime.threads",)),
    ("--log-level", str, ("runtime.log_level",)),
    ("--log-file", str, ("runtime.log_file",)),
    ("--precision", str, ("runtime.model_precision",)),
    ("--rs-fraction", float, ("runtime.rs_fraction",)),
    ("--monotonicity-queries", int, ("runtime.monotonicity_queries",)),
    ("--monotonicity-thresholds", int, ("runtime.monotonicity_thresholds",)),
)

# Flags que desligam opções booleanas
SWITCH_FLAGS = (
    ("--no-partitioning", "model.use_partitioning"),
    ("--constant-tau", "model.query_dependent_tau"),
    ("--no-verify", "workload.verify_labels"),
)


def _dest(flag: str) -> str:
    return "opt_" + flag.lstrip("-").replace("-", "_")


def _common_parser() -> argparse.ArgumentParser:
    """Flags de configuração aceitas por todos os subcomandos."""
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("configuração")
    group.add_argument("--config", type=Path, help="Arquivo JSON de configuração")
    group.add_argument("--preset", choices=sorted(PRESETS), help="Preset de hiperparâmetros")
    group.add_argument("--out", type=Path, default=Path("selest_output"), help="Diretório de saída")
    for flag, kind, keys in OVERRIDE_FLAGS:
        group.add_argument(flag, dest=_dest(flag), type=kind, default=None, help=", ".join(keys))
    for flag, key in SWITCH_FLAGS:
        group.add_argument(flag, dest=_dest(flag), action="store_const", const=False, default=None,
                           help=f"{key} = false")
    return common


def collect_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Traduz as flags informadas para overrides {"secao.chave": valor}."""
    overrides: Dict[str, Any] = {}
    for flag, _, keys in OVERRIDE_FLAGS:
        value = getattr(args, _dest(flag), None)
        if value is not None:
            for key in keys:
                overrides[key] = value
    for flag, key in SWITCH_FLAGS:
        value = getattr(args, _dest(flag), None)
        if value is not None:
            overrides[key] = value
    return overrides


def build_parser() -> argparse.ArgumentParser:
    """Cria o parser com todos os subcomandos."""
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="selest", description="Estimador de seletividade consistente")
    parser.add_argument("--version", action="version", version=f"selest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="Gera ou converte um dataset")
    source = p.add_mutually_exclusive_group()
    source.add_argument("--from-fvecs", type=Path, help="Converte um arquivo .fvecs")
    source.add_argument("--from-text", type=Path, help="Converte um arquivo texto (um vetor por linha)")
    p.add_argument("--normalize", action="store_true", help="Normaliza as linhas (distância cosseno)")
    p.add_argument("--dataset", type=Path, help="Arquivo de saída (padrão: <out>/dataset.vecd)")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("gen-workload", parents=[common], help="Gera e rotula a carga de trabalho")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--workload", type=Path, help="Arquivo de saída (padrão: <out>/workload.jsonl)")
    p.set_defaults(handler=cmd_gen_workload)

    p = sub.add_parser("train", parents=[common], help="Treina um modelo")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--workload", type=Path, required=True)
    p.add_argument("--model", type=Path, help="Arquivo de saída (padrão: <out>/model.seln)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("estimate", parents=[common], help="Estima seletividades de requisições JSONL")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, help="Arquivo de requisições (padrão: stdin)")
    p.add_argument("--output", type=Path, help="Arquivo de estimativas (padrão: stdout)")
    p.set_defaults(handler=cmd_estimate)

    p = sub.add_parser("evaluate", parents=[common], help="Avalia um modelo numa divisão")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--workload", type=Path, required=True)
    p.add_argument("--dataset", type=Path, help="Dataset para o baseline RS")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("update", parents=[common], help="Processa um stream de atualizações")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--workload", type=Path, required=True)
    p.add_argument("--stream", type=Path, help="Stream JSONL (padrão: gerado a partir de updates.*)")
    p.set_defaults(handler=cmd_update)

    p = sub.add_parser("demo-toy", parents=[common], help="Pontos de controle aprendidos contra fixos")
    p.add_argument("--toy-epochs", type=int, default=3000)
    p.set_defaults(handler=cmd_demo_toy)

    p = sub.add_parser("inspect-layout", parents=[common], help="Mostra o layout de partição de um modelo")
    p.add_argument("--model", type=Path, required=True)
    p.set_defaults(handler=cmd_inspect_layout)

    return parser


def _echo_config(settings: SelestSettings, out_dir: Path) -> Path:
    path = out_dir / RESOLVED_CONFIG_NAME
    save_config(settings, path)
    return path


def cmd_gen_data(args: argparse.Namespace, settings: SelestSettings) -> int:
    data = settings.data
    if args.from_fvecs is not None:
        dataset = load_fvecs(args.from_fvecs, data.distance, normalize=args.normalize or data.distance == "cosine")
    elif args.from_text is not None:
        dataset = load_text_vectors(args.from_text, data.distance,
                                    normalize=args.normalize or data.distance == "cosine")
    else:
        dataset = gen_synthetic(data.n, data.d, data.components, seed=data.seed, distance_kind=data.distance)

    path = args.dataset or args.out / "dataset.vecd"
    save_dataset(dataset, path)
    _echo_config(settings, args.out)
    print(path)
    return EXIT_OK


def cmd_gen_workload(args: argparse.Namespace, settings: SelestSettings) -> int:
    dataset = load_dataset(args.dataset)
    options = settings.workload
    targets = selectivity_targets(dataset.n, options.targets, options.max_fraction)
    with ConcurrencyService() as pool:
        workload = WorkloadService(pool).build_workload(
            dataset,
            options.queries,
            targets,
            split=options.split,
            seed=options.seed,
            eval_thresholds=options.eval_thresholds,
            noise_std=options.noise_std,
            train_fraction=options.train_fraction,
            t_max_mode=options.t_max_mode,
            t_max=options.t_max,
            verify=options.verify_labels,
        )

    path = args.workload or args.out / "workload.jsonl"
    save_workload(workload, path)
    _echo_config(settings, args.out)
    print(path)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, settings: SelestSettings) -> int:
    dataset = load_dataset(args.dataset)
    workload = load_workload(args.workload)
    # O t_max do modelo é sempre o da carga
    settings = settings.model_copy(
        update={"model": settings.model.model_copy(update={"t_max": workload.t_max})}
    )
    hyper = settings.model

    layout = build_layout(dataset, hyper)
    if layout.k > 1:
        with ConcurrencyService() as pool:
            workload = WorkloadService(pool).attach_cluster_labels(dataset, workload, layout)

    model = SelNetModel.build(hyper, dataset.d, layout)
    pretrain_autoencoder(
        model.ae,
        dataset,
        settings.training.ae_pretrain_epochs,
        seed=hyper.seed,
        learning_rate=settings.training.ae_learning_rate,
        batch_size=hyper.batch_size,
    )
    result = train(model, workload, settings.training)

    path = args.model or args.out / "model.seln"
    save_model(result.model, path, settings.runtime.model_precision)
    save_jsonl((record.to_dict() for record in result.log), args.out / "training_log.jsonl")
    _echo_config(settings, args.out)
    logger.info(
        f"Treino concluído: melhor época {result.best_epoch}, {settings.training.monitor} {result.best_score:.4f}"
    )
    print(path)
    return EXIT_OK


def _read_lines(path: Optional[Path], stdin: TextIO) -> List[str]:
    if path is None:
        return stdin.read().splitlines()
    return path.read_text(encoding="utf-8").splitlines()


def cmd_estimate(args: argparse.Namespace, settings: SelestSettings,
                 stdin: TextIO = None, stdout: TextIO = None, stderr: TextIO = None) -> int:
    """
    Estima cada requisição {"x": [...], "t": ...}.

    Linhas inválidas ou fora de [0, t_max] não geram saída: o erro vai para o
    stream de diagnóstico e o código de saída final é 1.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr

    model = load_model(args.model)
    estimates: List[str] = []
    failures = 0
    for lineno, line in enumerate(_read_lines(args.input, stdin), start=1):
        if not line.strip():
            continue
        try:
            x, t = parse_estimate_request(line, lineno)
            estimates.append(repr(model.estimate(x, t)))
        except SelestError as e:
            failures += 1
            print(f"linha {lineno}: {e}", file=stderr)

    text = "".join(value + "\n" for value in estimates)
    if args.output is not None:
        atomic_write_text(args.output, text)
    else:
        stdout.write(text)
    _echo_config(settings, args.out)

    if failures:
        logger.error(f"{failures} requisição(ões) rejeitada(s)")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, settings: SelestSettings) -> int:
    model = load_model(args.model)
    workload = load_workload(args.workload)
    dataset = load_dataset(args.dataset) if args.dataset is not None else None
    runtime = settings.runtime

    report = EvaluationService().evaluate(
        model,
        workload,
        split=args.split,
        dataset=dataset,
        rs_fraction=runtime.rs_fraction,
        rs_seed=runtime.seed,
        monotonicity_queries=runtime.monotonicity_queries,
        monotonicity_thresholds=runtime.monotonicity_thresholds,
        seed=runtime.seed,
    )
    table = report.to_table()
    atomic_write_text(args.out / "report.json", json.dumps(report.to_dict(), indent=4) + "\n")
    atomic_write_text(args.out / "report.txt", table + "\n")
    _echo_config(settings, args.out)
    print(table)
    return EXIT_OK


def cmd_update(args: argparse.Namespace, settings: SelestSettings) -> int:
    model = load_model(args.model)
    dataset = load_dataset(args.dataset)
    workload = load_workload(args.workload)
    updates = settings.updates

    if args.stream is not None:
        ops = load_update_stream(args.stream)
    else:
        ops = generate_update_stream(dataset, updates.steps, updates.batch_records, seed=updates.seed)
        save_update_stream(ops, args.out / "update_stream.jsonl")

    with ConcurrencyService() as pool:
        service = UpdateService(WorkloadService(pool), pool, model=model)
        config = service.incremental_config(updates.max_epochs, updates.patience, seed=updates.seed)
        result = service.run_stream(
            model,
            dataset,
            workload,
            ops,
            delta_u=updates.delta_u,
            config=config,
            monotonicity_queries=settings.runtime.monotonicity_queries,
            monotonicity_thresholds=settings.runtime.monotonicity_thresholds,
            seed=settings.runtime.seed,
        )

    save_model(result.model, args.out / "model_updated.seln", settings.runtime.model_precision)
    save_dataset(result.dataset, args.out / "dataset_updated.vecd")
    save_workload(result.workload, args.out / "workload_updated.jsonl")
    save_jsonl((report.to_dict() for report in result.reports), args.out / "stream_report.jsonl")
    _echo_config(settings, args.out)
    retrains = sum(report.retrained for report in result.reports)
    print(f"{len(result.reports)} passos, {retrains} retreino(s)")
    return EXIT_OK


def cmd_demo_toy(args: argparse.Namespace, settings: SelestSettings) -> int:
    result = ToyDemoService(epochs=args.toy_epochs, seed=settings.model.seed).run()
    atomic_write_text(args.out / "toy_demo.csv", result.to_csv())
    atomic_write_text(args.out / "toy_demo.json", json.dumps(result.to_dict(), indent=4) + "\n")
    _echo_config(settings, args.out)
    print(f"MSE aprendido {result.learned.mse:.6f}, MSE fixo {result.fixed.mse:.6f}")
    return EXIT_OK


def cmd_inspect_layout(args: argparse.Namespace, settings: SelestSettings) -> int:
    model = load_model(args.model)
    text = json.dumps(layout_to_dict(model.layout), indent=4) + "\n"
    atomic_write_text(args.out / "layout.json", text)
    _echo_config(settings, args.out)
    print(text, end="")
    return EXIT_OK


Handler = Callable[[argparse.Namespace, SelestSettings], int]


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Função principal da linha de comando.

    Args:
        argv: Argumentos (padrão: sys.argv[1:]).

    Returns:
        int: Código de saída (0 sucesso, 1 falha, 2 erro de uso).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    try:
        settings = resolve_settings(args.config, collect_overrides(args), args.preset)
        set_config(settings)
        setup_logging(settings.runtime.log_level, settings.runtime.log_file, base_dir=args.out)
        logger.info(f"Executando '{args.command}' (selest {__version__})")

        handler: Handler = args.handler
        return handler(args, settings)

    except (SelestError, ValueError, OSError) as e:
        logger.critical(f"Falha em '{args.command}': {e}")
        print(f"erro: {e}", file=sys.stderr)
        return EXIT_FAILURE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
