# -*- encoding: utf-8 -*-
"""
File helpers used by the scenario loader, the log readers and the result writers.
"""

import os, json, math, logging

logger = logging.getLogger(__name__)

def dir_create( dir_path ):
    os.makedirs( dir_path, exist_ok=True )

def file_exists( aPath ):
    return os.path.isfile( aPath )

def file_load( path, as_list=False ):

    try:

        with open( path, 'r', encoding='utf-8' ) as f:
            if as_list:
                return f.read().splitlines()
            return f.read()

    except (OSError, UnicodeDecodeError) as err:

        logger.error( 'cannot read %s: %s', path, err )
        raise

def _json_safe( value ):

    # NaN and infinities are not JSON
    if isinstance( value, float ) and not math.isfinite( value ):
        return None
    if isinstance( value, dict ):
        return { k: _json_safe( v ) for k, v in value.items() }
    if isinstance( value, (list, tuple) ):
        return [ _json_safe( v ) for v in value ]
    if hasattr( value, 'tolist' ):
        return _json_safe( value.tolist() )
    if hasattr( value, 'item' ):
        return _json_safe( value.item() )
    return value

def json_save( aPath, aContent ):

    with open( aPath, 'w' ) as f:
        json.dump( _json_safe( aContent ), f, indent=2, sort_keys=True, allow_nan=False )
        f.write( '\n' )

    return True
