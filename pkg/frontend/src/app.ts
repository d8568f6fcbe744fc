import { ApiError, fetchCards, fetchConcepts } from "./api.js";
import { renderCards, renderError, renderSuggestions } from "./render.js";

const SEARCH_DEBOUNCE_MS = 150;

function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    clearTimeout(timer);
    timer = setTimeout(() => fn(...args), ms);
  };
}

export interface AppHandles {
  search: HTMLInputElement;
  suggestions: HTMLElement;
  results: HTMLElement;
  banner: HTMLElement;
}

export interface AppController {
  select: (concept: string) => Promise<void>;
  suggest: (prefix: string) => Promise<void>;
}

export function initApp(handles: AppHandles, apiBase = ""): AppController {
  let inflight: AbortController | null = null;

  async function loadCards(concept: string): Promise<void> {
    // at most one in-flight cards request; superseded ones are cancelled
    inflight?.abort();
    inflight = new AbortController();
    renderError(handles.banner, null);
    try {
      const payload = await fetchCards(apiBase, concept, inflight.signal);
      renderCards(handles.results, payload);
      const url = new URL(window.location.href);
      url.searchParams.set("concept", concept);
      window.history.replaceState(null, "", url.toString());
    } catch (error) {
      if (error instanceof DOMException && error.name === "AbortError") {
        return;
      }
      if (error instanceof ApiError && error.status === 404) {
        handles.results.replaceChildren();
        renderError(handles.banner, `no description set for "${concept}"`);
        return;
      }
      renderError(handles.banner, "the description service is unreachable");
    }
  }

  async function suggest(prefix: string): Promise<void> {
    try {
      const payload = await fetchConcepts(apiBase, prefix);
      renderError(handles.banner, null);
      renderSuggestions(handles.suggestions, payload.concepts, (concept) => {
        handles.search.value = concept;
        handles.suggestions.replaceChildren();
        void loadCards(concept);
      });
    } catch {
      renderError(handles.banner, "the description service is unreachable");
    }
  }

  handles.search.addEventListener(
    "input",
    debounce(() => void suggest(handles.search.value.trim()), SEARCH_DEBOUNCE_MS),
  );

  const initial = new URL(window.location.href).searchParams.get("concept");
  if (initial) {
    handles.search.value = initial;
    void loadCards(initial);
  }

  return { select: loadCards, suggest };
}

export function bootstrap(): void {
  const search = document.getElementById("search");
  const suggestions = document.getElementById("suggestions");
  const results = document.getElementById("results");
  const banner = document.getElementById("banner");
  if (
    !(search instanceof HTMLInputElement) ||
    suggestions === null ||
    results === null ||
    banner === null
  ) {
    throw new Error("app shell is missing required elements");
  }
  initApp({ search, suggestions, results, banner });
}

if (typeof document !== "undefined" && document.getElementById("search")) {
  bootstrap();
}
