#pragma once

#include <httplib.h>

// httplib pulls in <resolv.h>, whose `_res` macro breaks any later header
// (Eigen among them) that uses `_res` as an identifier.
#ifdef _res
#undef _res
#endif
