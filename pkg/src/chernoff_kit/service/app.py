"""FastAPI service wrapping the experiment runner.

Endpoints:
  GET  /scenarios  -- list built-in scenario names
  POST /run        -- execute an experiment config; returns the summary
                      plus rendered CSV/JSON report texts
  POST /rates      -- refit convergence rates from a prior report CSV
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .. import runner
from ..scenarios import BUILTIN_SCENARIOS


class RunRequest(BaseModel):
    config: runner.ExperimentConfig


class RunResponse(BaseModel):
    exit_code: int
    summary: runner.RunSummary
    csv_text: str
    json_text: str


class RatesRequest(BaseModel):
    csv_text: str


class RatesResponse(BaseModel):
    rates: dict


def create_app() -> FastAPI:
    app = FastAPI(title="chernoff-kit", version="0.1.0")

    @app.get("/scenarios")
    def scenarios() -> dict:
        return {"scenarios": list(BUILTIN_SCENARIOS)}

    @app.post("/run", response_model=RunResponse)
    def run_experiment(req: RunRequest) -> RunResponse:
        try:
            summary, report = runner.run(req.config)
        except runner.ConfigError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return RunResponse(
            exit_code=summary.exit_code,
            summary=summary,
            csv_text=runner.render_csv(report),
            json_text=runner.render_json(summary),
        )

    @app.post("/rates", response_model=RatesResponse)
    def refit_rates(req: RatesRequest) -> RatesResponse:
        try:
            return RatesResponse(rates=runner.refit_rates_from_csv(req.csv_text))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    return app


app = create_app()
