import sys

from dotenv import load_dotenv

from app.conf.config import get_app_settings
from app.routers.v1.cli_router import dispatch
from app.utils.logger import log

load_dotenv()
app_settings = get_app_settings()


def main() -> int:
    log(f"{app_settings.project_name} (DASH_THREADS={app_settings.dash_threads})", level="debug")
    return dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
