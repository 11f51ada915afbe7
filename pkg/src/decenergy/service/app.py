"""FastAPI application exposing the modeling pipeline.

Handlers are synchronous on purpose: the work is CPU-bound linear algebra, so
FastAPI runs each request in its worker threadpool. Domain errors map to
HTTP 400 with a stable machine-readable error code.
"""
from __future__ import annotations

from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from .. import benchgen, crosscodec, evaluation, ingest, regression, rehwed
from ..dataset_io import dumps_csv, read_dataset
from ..errors import DecenergyError, EmptyTrainingSet, SchemaViolation, TooFewSamples, ZeroMean
from ..types import (
    BitstreamRecord,
    Dataset,
    EnergySample,
    EnergyTarget,
    FeatureSetKind,
    MeasurementSeries,
    MeasurementSetup,
    Regressor,
    SeriesLabel,
    TemporalFeature,
)
from . import schemas


def _dataset(payload: schemas.DatasetPayload) -> Dataset:
    return read_dataset(payload.content, payload.format)


def _series_summary(
    target: EnergyTarget,
    series: MeasurementSeries,
    max_deviation: float,
    confidence: float,
) -> schemas.SeriesSummary:
    try:
        result = ingest.confidence_check(series, max_deviation=max_deviation, confidence=confidence)
        return schemas.SeriesSummary(
            target=target,
            label=series.label,
            passed=result.passed,
            relative_halfwidth=result.relative_halfwidth,
            mean=result.mean,
            n=result.n,
        )
    except (TooFewSamples, ZeroMean):
        values = series.values
        return schemas.SeriesSummary(
            target=target,
            label=series.label,
            passed=False,
            relative_halfwidth=None,
            mean=float(sum(values) / len(values)),
            n=len(values),
        )


def _present_on_all(dataset: Dataset) -> list[FeatureSetKind]:
    kinds = []
    for kind in FeatureSetKind:
        if all(r.features_for(kind) is not None for r in dataset.records):
            kinds.append(kind)
    return kinds


def create_app() -> FastAPI:
    app = FastAPI(title="decenergy", version=__version__)

    @app.exception_handler(DecenergyError)
    async def domain_error_handler(request: Request, exc: DecenergyError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": exc.code, "message": str(exc)})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/parse/callgrind", response_model=schemas.EventVectorResponse)
    def parse_callgrind(request: schemas.CallgrindRequest) -> schemas.EventVectorResponse:
        vector = ingest.parse_callgrind(request.text)
        return schemas.EventVectorResponse(**vector.as_dict())

    @app.post("/parse/perf", response_model=schemas.PerfResponse)
    def parse_perf(request: schemas.PerfRequest) -> schemas.PerfResponse:
        features = ingest.parse_perf_stat(request.text)
        return schemas.PerfResponse(
            instructions=features.instructions,
            cycles=features.cycles,
            user_time=features.user_time,
        )

    @app.post("/energy/confidence", response_model=schemas.ConfidenceResponse)
    def confidence(request: schemas.ConfidenceRequest) -> schemas.ConfidenceResponse:
        series = MeasurementSeries(tuple(request.values), request.label)
        result = ingest.confidence_check(
            series, max_deviation=request.max_deviation, confidence=request.confidence
        )
        return schemas.ConfidenceResponse(
            passed=result.passed,
            relative_halfwidth=result.relative_halfwidth,
            mean=result.mean,
            n=result.n,
        )

    @app.post("/energy/derive", response_model=schemas.DeriveResponse)
    def derive(request: schemas.DeriveRequest) -> schemas.DeriveResponse:
        sample = ingest.derive_decoding_energy(
            MeasurementSeries(tuple(request.active), SeriesLabel.ACTIVE),
            MeasurementSeries(tuple(request.idle), SeriesLabel.IDLE),
            setup=request.setup,
            max_deviation=request.max_deviation,
            confidence=request.confidence,
        )
        return schemas.DeriveResponse(
            joules=sample.joules,
            setup=sample.setup,
            n_repeats=sample.n_repeats,
            passed_confidence=sample.passed_confidence,
        )

    @app.post("/ingest", response_model=schemas.IngestResponse)
    def ingest_record(request: schemas.IngestRequest) -> schemas.IngestResponse:
        base = _dataset(request.dataset) if request.dataset is not None else Dataset(())

        temporal = None
        if request.t_dec_sw is not None:
            temporal = TemporalFeature(request.t_dec_sw)
        perf = ingest.parse_perf_stat(request.perf_text) if request.perf_text else None
        valgrind = ingest.parse_callgrind(request.callgrind_text) if request.callgrind_text else None

        summaries: list[schemas.SeriesSummary] = []

        def derive_energy(text: Optional[str], target: EnergyTarget, setup: MeasurementSetup):
            if not text:
                return None
            active, idle = ingest.parse_measurement_series(text)
            summaries.append(_series_summary(target, active, request.max_deviation, request.confidence))
            summaries.append(_series_summary(target, idle, request.max_deviation, request.confidence))
            return ingest.derive_decoding_energy(
                active, idle, setup=setup,
                max_deviation=request.max_deviation, confidence=request.confidence,
            )

        energy_sw = derive_energy(request.measurements_sw, EnergyTarget.ENERGY_SW, MeasurementSetup.MSS)
        energy_hw = derive_energy(request.measurements_hw, EnergyTarget.ENERGY_HW, MeasurementSetup.MSH)

        meta = request.metadata
        record = BitstreamRecord(
            id=meta.id,
            codec=meta.codec,
            decoder_name=meta.decoder_name,
            decoder_kind=meta.decoder_kind,
            sequence=meta.sequence,
            class_label=meta.class_label,
            qp=meta.qp,
            condition=meta.condition,
            temporal=temporal,
            perf=perf,
            valgrind=valgrind,
            energy_sw=energy_sw,
            energy_hw=energy_hw,
        )
        merged = Dataset(base.records + (record,), base.provenance)
        return schemas.IngestResponse(
            dataset=schemas.DatasetPayload(format="csv", content=dumps_csv(merged)),
            record_id=record.id,
            n_records=len(merged),
            confidence=summaries,
        )

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(request: schemas.SynthRequest) -> schemas.SynthResponse:
        if request.spec is not None:
            spec = benchgen.spec_from_dict(request.spec, default_seed=request.seed)
        else:
            spec = benchgen.default_generator_spec(seed=request.seed)
        dataset, truth = benchgen.generate(spec)
        return schemas.SynthResponse(
            dataset_csv=dumps_csv(dataset),
            ground_truth=benchgen.ground_truth_to_dict(truth),
            n_records=len(dataset),
        )

    @app.post("/models/train", response_model=schemas.TrainResponse)
    def train(request: schemas.TrainRequest) -> schemas.TrainResponse:
        dataset = _dataset(request.dataset)
        if request.rehwed:
            if request.regressor is not Regressor.GPR:
                raise SchemaViolation("the pretrained hardware-energy model is always a GP")
            kwargs = {}
            if request.codecs is not None:
                kwargs["codecs"] = tuple(request.codecs)
            if request.decoder_scope is not None:
                kwargs["decoder_scope"] = request.decoder_scope
            model = rehwed.train_rehwed_model(
                dataset, kind=request.kind, seed=request.seed,
                restarts=request.restarts, **kwargs,
            )
            return schemas.TrainResponse(model=model.to_dict(), n_training_records=len(model.model.dual_weights))

        subset = dataset.filter(
            lambda r: r.features_for(request.kind) is not None
            and r.energy_for(request.target) is not None
        )
        if request.codecs is not None:
            wanted = set(request.codecs)
            subset = subset.filter(lambda r: r.codec in wanted)
        if request.decoder_scope is not None:
            subset = subset.filter(lambda r: r.decoder_kind is request.decoder_scope)
        if len(subset) == 0:
            raise EmptyTrainingSet("no records carry the requested features and target")
        features, targets, _ = evaluation.extract_features(subset, request.kind, request.target)
        model = regression.fit_regressor(
            features, targets, request.regressor, seed=request.seed,
            intercept=request.intercept, nonnegative=request.nonnegative,
            restarts=request.restarts,
        )
        return schemas.TrainResponse(
            model=regression.model_to_dict(model), n_training_records=len(subset)
        )

    @app.post("/evaluate", response_model=schemas.EvaluateResponse)
    def evaluate(request: schemas.EvaluateRequest) -> schemas.EvaluateResponse:
        dataset = _dataset(request.dataset)
        kinds = request.kinds if request.kinds else _present_on_all(dataset)
        if not kinds:
            raise SchemaViolation("no feature set is present on every record; pass kinds explicitly")

        group_keys: list[tuple[str, str]] = []
        for rec in dataset.records:
            key = (rec.decoder_name, rec.decoder_kind.value)
            if key not in group_keys:
                group_keys.append(key)

        groups = []
        table_rows = []
        for decoder_name, decoder_kind in group_keys:
            subset = dataset.filter(
                lambda r: r.decoder_name == decoder_name and r.decoder_kind.value == decoder_kind
            )
            reports = {}
            for kind in kinds:
                reports[kind] = evaluation.cross_validate(
                    subset, kind, request.regressor,
                    target=request.target, k=request.k, seed=request.seed,
                )
            groups.append(schemas.EvaluateGroup(
                decoder_name=decoder_name,
                decoder_kind=decoder_kind,
                reports={k.value: evaluation.report_to_dict(r) for k, r in reports.items()},
            ))
            table_rows.append((f"{decoder_name} ({decoder_kind})", reports))
        table = evaluation.format_evaluation_table(table_rows, list(kinds))
        return schemas.EvaluateResponse(groups=groups, table=table)

    @app.post("/cross-predict", response_model=schemas.CrossPredictResponse)
    def cross_predict(request: schemas.CrossPredictRequest) -> schemas.CrossPredictResponse:
        if request.phase is not None:
            phase = crosscodec.phase_preset(request.phase, request.decoder_scope)
        elif request.training_codecs and request.verification_codec is not None:
            phase = crosscodec.PhaseConfig(
                phase_id=crosscodec.CUSTOM_PHASE_ID,
                training_codecs=frozenset(request.training_codecs),
                verification_codec=request.verification_codec,
                decoder_scope=request.decoder_scope,
            )
        else:
            raise SchemaViolation(
                "pass either a preset phase or both training_codecs and verification_codec"
            )
        train_ds = _dataset(request.train)
        verify_ds = _dataset(request.verify)
        outcomes = []
        scatter = {}
        for kind in request.kinds:
            outcome = crosscodec.run_phase(
                train_ds, verify_ds, phase, kind, request.regressor, seed=request.seed
            )
            outcomes.append(outcome)
            for report in outcome.reports:
                scatter[f"{kind.value}_{report.decoder_kind.value}"] = crosscodec.scatter_csv(report)
        return schemas.CrossPredictResponse(
            outcomes=[crosscodec.outcome_to_dict(o) for o in outcomes],
            table=crosscodec.format_phase_table(outcomes),
            scatter=scatter,
        )

    @app.post("/rehwed", response_model=schemas.RehwedResponse)
    def rehwed_score(request: schemas.RehwedRequest) -> schemas.RehwedResponse:
        model = rehwed.rehwed_model_from_dict(request.model)
        kind = model.model.kind
        test_ds = _dataset(request.test)
        anchor_ds = _dataset(request.anchor)
        report = rehwed.compute_rehwed(
            model,
            rehwed.profiles_from_dataset(test_ds, kind),
            rehwed.profiles_from_dataset(anchor_ds, kind),
            test_label=request.test_label,
            anchor_label=request.anchor_label,
        )

        def scalar_map(dataset: Dataset, getter) -> Optional[dict[str, float]]:
            values = {}
            for rec in dataset.records:
                value = getter(rec)
                if value is None:
                    return None
                values[rec.id] = value
            return values

        rswdt = None
        test_t = scalar_map(test_ds, lambda r: r.temporal.t_dec_sw if r.temporal else None)
        anchor_t = scalar_map(anchor_ds, lambda r: r.temporal.t_dec_sw if r.temporal else None)
        if test_t and anchor_t:
            rswdt = rehwed.relative_ratio_metric(test_t, anchor_t)
        rswed = None
        test_e = scalar_map(test_ds, lambda r: r.energy_sw.joules if r.energy_sw else None)
        anchor_e = scalar_map(anchor_ds, lambda r: r.energy_sw.joules if r.energy_sw else None)
        if test_e and anchor_e:
            rswed = rehwed.relative_ratio_metric(test_e, anchor_e)
        report = rehwed.with_passthrough(report, rswdt, rswed)

        return schemas.RehwedResponse(
            report=rehwed.rehwed_report_to_dict(report),
            table=rehwed.format_rehwed_table([report]),
        )

    return app
