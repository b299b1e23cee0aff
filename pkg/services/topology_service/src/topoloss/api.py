from typing import List, Optional, Union

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from . import __version__
from .complex_core import PointCloud, build_rips
from .diagram_metrics import bottleneck, restoration_match, shrinking_cost, wasserstein
from .errors import DataIOError, InvalidInputError
from .optimizer import TheoremConstants, step_size_terms
from .persistence import compute_persistence
from .serialization import diagram_from_records, diagram_to_records, matching_to_dict

app = FastAPI(
    title="Topology Service",
    description="Persistence diagrams, diagram distances and step-size rules",
    version=__version__,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:5173"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


class DiagramPoint(BaseModel):
    dim: int = 0
    birth: float
    death: Optional[float] = None
    birth_simplex: int = -1
    death_simplex: Optional[int] = None


class PersistenceRequest(BaseModel):
    points: List[List[float]]
    max_dim: int = 1
    max_radius: Optional[float] = None
    hom_dim: int = 0


class DistanceRequest(BaseModel):
    diagram_a: List[DiagramPoint]
    diagram_b: List[DiagramPoint]
    q: Union[float, str] = 2.0
    dim: Optional[int] = Field(default=None, ge=0)


class RestorationRequest(BaseModel):
    truth: List[DiagramPoint]
    prediction: List[DiagramPoint]
    dim: Optional[int] = Field(default=None, ge=0)


class StepSizeRequest(BaseModel):
    constants: TheoremConstants
    lambda_topo: float = Field(ge=0.0)
    lambda_reg: float = Field(ge=0.0)
    epsilon: float


def _diagram(points: List[DiagramPoint], name: str):
    return diagram_from_records([p.model_dump() for p in points], source=name)


def _q(value: Union[float, str]) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return float("inf")
        raise InvalidInputError(f"q must be a number or 'inf', got {value!r}")
    return float(value)


def _translate(e: Exception) -> HTTPException:
    if isinstance(e, InvalidInputError):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, DataIOError):
        return HTTPException(status_code=422, detail=str(e))
    return HTTPException(status_code=500, detail=str(e))


@app.get("/health")
async def health_check():
    return {"status": "healthy"}


@app.post("/persistence")
async def persistence(request: PersistenceRequest):
    try:
        filtration = build_rips(
            PointCloud(request.points),
            max_dim=request.max_dim,
            max_radius=float("inf") if request.max_radius is None else request.max_radius,
        )
        diagram = compute_persistence(filtration, request.hom_dim)
        return {"points": diagram_to_records(diagram)}
    except Exception as e:
        raise _translate(e)


@app.post("/distance")
async def distance(request: DistanceRequest):
    try:
        diagram_a = _diagram(request.diagram_a, "diagram_a")
        diagram_b = _diagram(request.diagram_b, "diagram_b")
        if request.dim is not None:
            diagram_a, diagram_b = diagram_a.restrict(request.dim), diagram_b.restrict(request.dim)
        value, matching = wasserstein(diagram_a, diagram_b, _q(request.q))
        return {
            "distance": value,
            "matching": matching_to_dict(matching),
            "bottleneck": bottleneck(diagram_a, diagram_b),
        }
    except Exception as e:
        raise _translate(e)


@app.post("/restoration")
async def restoration(request: RestorationRequest):
    try:
        truth = _diagram(request.truth, "truth")
        prediction = _diagram(request.prediction, "prediction")
        matching = restoration_match(truth, prediction, dim=request.dim)
        return {
            "matching": matching_to_dict(matching),
            "restoration_cost": matching.cost,
            "shrinking_cost": shrinking_cost(prediction, matching, dim=request.dim),
        }
    except Exception as e:
        raise _translate(e)


@app.post("/step-size")
async def step_size(request: StepSizeRequest):
    try:
        smooth, topo, reg = step_size_terms(
            request.constants, request.lambda_topo, request.lambda_reg, request.epsilon
        )
        return {
            "eta": min(smooth, topo, reg),
            "terms": {
                "smoothness": smooth,
                "topology": None if topo == float("inf") else topo,
                "regularization": None if reg == float("inf") else reg,
            },
        }
    except Exception as e:
        raise _translate(e)
