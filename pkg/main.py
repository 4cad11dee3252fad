from dotenv import load_dotenv

from app.cli import app
from app.core.logging import setup_logging

load_dotenv()
setup_logging()

if __name__ == "__main__":
    app()
