#pragma once

#include "airrag/actions.hpp"
#include "airrag/clients.hpp"
#include "airrag/eval.hpp"
#include "airrag/http_clients.hpp"
#include "airrag/metrics.hpp"
#include "airrag/simenv.hpp"
#include "airrag/text.hpp"
#include "airrag/tree.hpp"
#include "airrag/types.hpp"
#include "airrag/verify.hpp"
