"""HTTP front-end: run scenarios and validate topologies as a service.

Runs are stateless and in-memory, so the service can serve many clients
concurrently; each request builds its own simulation.  Scenario texts
submitted over HTTP may only reference ``builtin:`` topologies (no file
system access on the server's behalf).
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .scenario import BUILTIN_SCENARIOS, parse_scenario
from .harness import run_scenario
from .topology import parse_topology


class DiagnosticModel(BaseModel):
    line: int
    message: str


class TopologyValidateRequest(BaseModel):
    text: str = Field(description="topology document to validate")


class TopologyValidateResponse(BaseModel):
    valid: bool
    diagnostics: list[DiagnosticModel]


class ScenarioInfo(BaseModel):
    name: str
    title: str


class RunRequest(BaseModel):
    scenario: str = Field(description="built-in scenario name or a full scenario document")
    include_trace: bool = False


class RunResponse(BaseModel):
    files: dict[str, str]
    summary: dict


app = FastAPI(title="sdnfed", version=__version__,
              description="Deterministic multi-domain SDN control-plane simulator")


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/scenarios", response_model=list[ScenarioInfo])
def list_scenarios() -> list[ScenarioInfo]:
    return [ScenarioInfo(name=name, title=title)
            for name, (title, _) in sorted(BUILTIN_SCENARIOS.items())]


@app.post("/topology/validate", response_model=TopologyValidateResponse)
def validate_topology(request: TopologyValidateRequest) -> TopologyValidateResponse:
    result = parse_topology(request.text)
    return TopologyValidateResponse(
        valid=result.ok,
        diagnostics=[DiagnosticModel(line=d.line, message=d.message)
                     for d in result.diagnostics],
    )


@app.post("/runs", response_model=RunResponse)
def run(request: RunRequest) -> RunResponse:
    if request.scenario in BUILTIN_SCENARIOS:
        text = BUILTIN_SCENARIOS[request.scenario][1]
    else:
        text = request.scenario
    parsed = parse_scenario(text)
    if not parsed.ok:
        raise HTTPException(
            status_code=422,
            detail=[{"line": d.line, "message": d.message} for d in parsed.diagnostics],
        )
    result = run_scenario(parsed.scenario, include_trace=request.include_trace)
    return RunResponse(files=result.files, summary=result.summary)
