import uvicorn

from .api import app
from .settings import API_HOST, API_PORT, configure_logging

if __name__ == "__main__":
    configure_logging()
    uvicorn.run(app, host=API_HOST, port=API_PORT)
