import importlib.util
import os
import sys
from pathlib import Path

# Under ctest, import the module from the build tree even when another copy
# of the package is installed.
_module_dir = os.environ.get("WEE_EXPECT_MODULE_DIR")
if _module_dir:
    _dir = Path(_module_dir)
    for _name, _file in (("wee._wee", next(_dir.glob("_wee*.so"))), ("wee", _dir / "__init__.py")):
        _spec = importlib.util.spec_from_file_location(
            _name, _file, submodule_search_locations=[str(_dir)] if _name == "wee" else None
        )
        _module = importlib.util.module_from_spec(_spec)
        sys.modules[_name] = _module
        _spec.loader.exec_module(_module)
    sys.modules["wee"]._wee = sys.modules["wee._wee"]
