#pragma once

#include "panda/bounds.hpp"
#include "panda/csv.hpp"
#include "panda/entropy.hpp"
#include "panda/executor.hpp"
#include "panda/hypergraph.hpp"
#include "panda/measures.hpp"
#include "panda/oracle.hpp"
#include "panda/proof.hpp"
#include "panda/query.hpp"
#include "panda/rational.hpp"
#include "panda/relation.hpp"
#include "panda/simplex.hpp"
#include "panda/stats.hpp"
#include "panda/varset.hpp"
#include "panda/yannakakis.hpp"
