"""REST service (FastAPI) exposing the optimization core."""
