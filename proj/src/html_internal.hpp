#pragma once

#include <string>
#include <string_view>

#include "domremedy/dom.hpp"
#include "domremedy/html.hpp"

namespace domremedy {

void append_utf8(std::string& out, char32_t cp);

bool is_html_integration_point(Namespace ns, std::string_view name, bool annotation_html);
bool is_mathml_text_integration_point(Namespace ns, std::string_view name);
bool annotation_encoding_is_html(const Attributes& attrs);

// Namespace a child element named `child_name` gets when parsed under `parent`.
Namespace element_namespace(const FragmentContext& parent, std::string_view child_name);

}  // namespace domremedy
