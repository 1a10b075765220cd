#!/usr/bin/env python3
"""
SecLand - Secondary Landmark Learning CLI
Self-supervised secondary landmark detection from primary landmarks and multiview geometry
"""

import sys
import signal
from pathlib import Path

# Add the project root to the Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from secland.cli import main


def signal_handler(signum, frame):
    """Handle interruption signals gracefully"""
    print("\n🛑 Received interrupt signal. Cleaning up...", file=sys.stderr)
    sys.exit(130)


if __name__ == "__main__":
    try:
        signal.signal(signal.SIGINT, signal_handler)
        signal.signal(signal.SIGTERM, signal_handler)

        main()

    except KeyboardInterrupt:
        print("\n🛑 Run interrupted by user", file=sys.stderr)
        sys.exit(130)
    except Exception as e:
        print(f"\n❌ Fatal error: {e}", file=sys.stderr)
        sys.exit(1)
