import type { CardsResponse, ConceptsResponse } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
  }
}

async function getJson<T>(url: string, signal?: AbortSignal): Promise<T> {
  const response = await fetch(url, { signal });
  if (!response.ok) {
    throw new ApiError(`request failed: ${response.status}`, response.status);
  }
  return (await response.json()) as T;
}

export function fetchConcepts(
  base: string,
  prefix: string,
  signal?: AbortSignal,
): Promise<ConceptsResponse> {
  const query = prefix ? `?q=${encodeURIComponent(prefix)}` : "";
  return getJson<ConceptsResponse>(`${base}/api/concepts${query}`, signal);
}

export function fetchCards(
  base: string,
  concept: string,
  signal?: AbortSignal,
): Promise<CardsResponse> {
  return getJson<CardsResponse>(
    `${base}/api/concepts/${encodeURIComponent(concept)}/cards`,
    signal,
  );
}
